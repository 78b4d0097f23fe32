//! CSV readers for observation matrices, covariance/correlation matrices
//! and contingency tables.

use nalgebra::DMatrix;

use crate::error::CliError;
use mutind::models::MultinomialSuffStats;

fn records(text: &str) -> Result<Vec<Vec<String>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(rec.iter().map(str::to_string).collect());
    }
    Ok(out)
}

fn is_numeric_row(row: &[String]) -> bool {
    row.iter().all(|f| f.parse::<f64>().is_ok())
}

fn parse_row(row: &[String], line: usize) -> Result<Vec<f64>, CliError> {
    row.iter()
        .map(|f| f.parse::<f64>().map_err(|_| CliError::input(format!("row {line}: {f:?} is not a number"))))
        .collect()
}

/// A numeric table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub names: Option<Vec<String>>,
    pub matrix: DMatrix<f64>,
}

/// Rows are observations, columns variables.
pub fn read_matrix(text: &str) -> Result<NamedMatrix, CliError> {
    let mut rows = records(text)?;
    if rows.is_empty() {
        return Err(CliError::input("input has no rows"));
    }
    let names = if is_numeric_row(&rows[0]) { None } else { Some(rows.remove(0)) };
    let width = names.as_ref().map_or(rows.first().map_or(0, Vec::len), Vec::len);
    if rows.is_empty() || width == 0 {
        return Err(CliError::input("input has no numeric rows"));
    }
    let mut values = Vec::with_capacity(rows.len() * width);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(CliError::input(format!("row {} has {} fields, expected {width}", i + 1, row.len())));
        }
        let parsed = parse_row(row, i + 1)?;
        if parsed.iter().any(|v| !v.is_finite()) {
            return Err(CliError::input(format!("row {} has a non-finite value", i + 1)));
        }
        values.extend(parsed);
    }
    Ok(NamedMatrix { names, matrix: DMatrix::from_row_slice(rows.len(), width, &values) })
}

/// Square matrix; a leading header row and/or label column are allowed.
pub fn read_square(text: &str) -> Result<NamedMatrix, CliError> {
    let mut rows = records(text)?;
    if rows.is_empty() {
        return Err(CliError::input("matrix input is empty"));
    }
    let mut names = if is_numeric_row(&rows[0]) { None } else { Some(rows.remove(0)) };
    // drop a label column
    if rows.iter().any(|r| r.first().is_some_and(|f| f.parse::<f64>().is_err())) {
        for r in rows.iter_mut() {
            r.remove(0);
        }
        if let Some(n) = names.as_mut() {
            if n.len() == rows.first().map_or(0, Vec::len) + 1 {
                n.remove(0);
            }
        }
    }
    let d = rows.len();
    let mut values = Vec::with_capacity(d * d);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(CliError::input(format!("matrix row {} has {} entries, expected {d} (matrix must be square)", i + 1, row.len())));
        }
        values.extend(parse_row(row, i + 1)?);
    }
    if names.as_ref().is_some_and(|n| n.len() != d) {
        return Err(CliError::input("header length does not match the matrix size"));
    }
    Ok(NamedMatrix { names, matrix: DMatrix::from_row_slice(d, d, &values) })
}

/// First row `arities,a1,...,aD`; then rows `x1,...,xD,count` with 0-based levels.
pub fn read_contingency(text: &str) -> Result<MultinomialSuffStats, CliError> {
    let rows = records(text)?;
    let (head, cells) = rows.split_first().ok_or_else(|| CliError::input("contingency input is empty"))?;
    if head.first().map(|s| s.to_ascii_lowercase()) != Some("arities".into()) {
        return Err(CliError::input("contingency input must start with a row `arities,a1,...,aD`"));
    }
    let arities: Vec<usize> = head[1..]
        .iter()
        .map(|f| f.parse().map_err(|_| CliError::input(format!("bad arity {f:?}"))))
        .collect::<Result<_, _>>()?;
    let d = arities.len();
    if d == 0 {
        return Err(CliError::input("no variables in contingency table"));
    }
    let mut entries = Vec::with_capacity(cells.len());
    for (i, row) in cells.iter().enumerate() {
        if row.len() != d + 1 {
            return Err(CliError::input(format!("cell row {} has {} fields, expected {}", i + 1, row.len(), d + 1)));
        }
        let parse = |f: &String| f.parse::<u64>().map_err(|_| CliError::input(format!("cell row {}: {f:?} is not a non-negative integer", i + 1)));
        let coords = row[..d].iter().map(|f| parse(f).map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        entries.push((coords, parse(&row[d])?));
    }
    Ok(MultinomialSuffStats::from_cells(arities, entries)?)
}

#[cfg(test)]
pub fn contingency_to_csv(t: &MultinomialSuffStats) -> String {
    let mut out = String::from("arities");
    for a in t.arities() {
        out.push_str(&format!(",{a}"));
    }
    out.push('\n');
    let arities = t.arities();
    for (idx, &c) in t.counts().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut coords = vec![0; arities.len()];
        let mut rem = idx;
        for d in (0..arities.len()).rev() {
            coords[d] = rem % arities[d];
            rem /= arities[d];
        }
        for x in coords {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_with_and_without_header() {
        let m = read_matrix("a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(m.names.unwrap(), vec!["a", "b"]);
        assert_eq!(m.matrix[(1, 0)], 3.0);
        let m = read_matrix("1, 2\n3, 4\n\n").unwrap();
        assert!(m.names.is_none());
        assert!(read_matrix("1,2\n3\n").is_err());
        assert!(read_matrix("1,x\n").is_err());
    }

    #[test]
    fn square_with_labels() {
        let m = read_square(",x,y\nx,1,0.5\ny,0.5,1\n").unwrap();
        assert_eq!(m.names.unwrap(), vec!["x", "y"]);
        assert_eq!(m.matrix[(0, 1)], 0.5);
        assert!(read_square("1,2,3\n4,5,6\n").is_err());
    }

    #[test]
    fn contingency_round_trip() {
        let t = read_contingency("arities,2,3\n0,0,5\n1,2,7\n0,0,1\n").unwrap();
        assert_eq!(t.total(), 13);
        assert_eq!(t.counts()[0], 6);
        let back = read_contingency(&contingency_to_csv(&t)).unwrap();
        assert_eq!(back, t);
        assert!(read_contingency("2,3\n0,0,5\n").is_err());
        assert!(read_contingency("arities,2\n2,1\n").is_err());
    }
}
