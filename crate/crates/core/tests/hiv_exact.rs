use mutind::datasets::hiv;
use mutind::exact::{exact_posterior, Event, PosteriorTable};
use mutind::models::{GaussianSuffStats, ModelScorer};
use mutind::partition::{BlockKey, Partition};

fn table(model: &str, known_mean: bool) -> PosteriorTable {
    let ds = hiv();
    let stats = GaussianSuffStats::from_covariance(ds.covariance_matrix(), ds.n, known_mean).unwrap();
    let scorer = match model {
        "optim" => ModelScorer::bayes_optim(stats),
        "corr" => ModelScorer::bayes_corr(stats),
        _ => ModelScorer::gaussian_bic(stats),
    }
    .unwrap();
    exact_posterior(&scorer, 6).unwrap()
}

fn p(s: &str) -> Partition {
    Partition::parse(s).unwrap()
}

const TOP4: [&str; 4] = ["12356|4", "12|356|4", "126|35|4", "124|356"];

#[test]
fn top_four_order_is_shared_by_all_models() {
    for model in ["optim", "corr", "bic"] {
        for known in [true, false] {
            let t = table(model, known);
            assert_eq!(t.len(), 203);
            let top: Vec<String> = t.top(4).into_iter().map(|(q, _)| q.to_string()).collect();
            assert_eq!(top, TOP4, "{model} known_mean={known}");
            let mass: f64 = t.top(4).iter().map(|(_, w)| w).sum();
            assert!(mass > 0.99, "{model}: {mass}");
        }
    }
}

#[test]
fn probabilities_close_to_reference() {
    let reference = [
        ("optim", [0.852, 0.132, 8.21e-3, 3.80e-3]),
        ("corr", [0.648, 0.320, 1.94e-2, 4.77e-3]),
        ("bic", [0.912, 7.90e-2, 4.51e-3, 2.00e-3]),
    ];
    for (model, values) in reference {
        let t = table(model, true);
        for (name, v) in TOP4.iter().zip(values) {
            let got = t.prob(&p(name));
            assert!((got - v).abs() < 0.02, "{model} {name}: {got} vs {v}");
        }
    }
}

#[test]
fn relevance_and_events() {
    let t = table("optim", true);
    let four = BlockKey::new(vec![3]).unwrap();
    assert!((t.relevance(&four) - 0.994).abs() < 0.01);
    assert!((t.relevance(&BlockKey::parse("12356").unwrap()) - 0.852).abs() < 0.05);
    assert!((t.event(&Event::SameBlock(vec![2, 4, 5])) - 0.989).abs() < 0.01);
    let apart = t.event(&Event::Not(Box::new(Event::SameBlock(vec![0, 1]))));
    // matches the reference mantissa 3.20; a separating log Bayes factor of roughly 14 rules out 1e-15
    assert!((apart - 3.20e-5).abs() < 5e-7, "P(1 and 2 apart) = {apart}");
}

#[test]
fn relabeling_the_variables_relabels_the_posterior() {
    let ds = hiv();
    let stats = GaussianSuffStats::from_covariance(ds.covariance_matrix(), ds.n, true).unwrap();
    let perm = [3, 0, 5, 1, 4, 2];
    let direct = exact_posterior(&ModelScorer::bayes_optim(stats.permuted(&perm)).unwrap(), 6).unwrap();
    let moved = table("optim", true).permuted(&perm);
    for (q, w) in direct.iter() {
        assert!((moved.prob(q) - w).abs() < 1e-9, "{q}");
    }
}
