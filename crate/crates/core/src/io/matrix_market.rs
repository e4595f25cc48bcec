use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{ConstraintMatrix, CsrMatrix};
use crate::model::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_header(line: &str) -> Result<(Format, Field, Symmetry)> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(Error::MalformedHeader(format!("expected '%%MatrixMarket matrix <format> <field> <symmetry>', got '{line}'")));
    }
    if tokens[1] != "matrix" {
        return Err(Error::MalformedHeader(format!("unsupported object '{}'", tokens[1])));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(Error::MalformedHeader(format!("unsupported format '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" if format == Format::Coordinate => Field::Pattern,
        other => return Err(Error::MalformedHeader(format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(Error::MalformedHeader(format!("unsupported symmetry '{other}'"))),
    };
    Ok((format, field, symmetry))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?;
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("invalid {what} '{tok}'") })
}

fn parse_value(tok: Option<&str>, line: usize) -> Result<f64> {
    let v: f64 = parse_num(tok, line, "value")?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: "non-finite value".into() });
    }
    Ok(v)
}

/// Parses Matrix Market text. Coordinate files give sparse storage, array files dense.
pub fn parse_matrix_market(text: &str) -> Result<ConstraintMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let (format, field, symmetry) = parse_header(header)?;
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| Error::MalformedHeader("missing size line".into()))?;
    let mut tok = size.split_whitespace();
    let nrows: usize = parse_num(tok.next(), size_line, "row count")?;
    let ncols: usize = parse_num(tok.next(), size_line, "column count")?;
    if symmetry != Symmetry::General && nrows != ncols {
        return Err(Error::MalformedHeader(format!("{nrows}x{ncols} matrix declared symmetric")));
    }

    match format {
        Format::Coordinate => {
            let nnz: usize = parse_num(tok.next(), size_line, "entry count")?;
            let mut triplets = Vec::with_capacity(nnz);
            let mut seen = 0;
            for (line, l) in body {
                let mut t = l.split_whitespace();
                let row: usize = parse_num(t.next(), line, "row index")?;
                let col: usize = parse_num(t.next(), line, "column index")?;
                if row == 0 || col == 0 || row > nrows || col > ncols {
                    return Err(Error::EntryOutOfBounds { line, row, col, nrows, ncols });
                }
                let v = match field {
                    Field::Pattern => 1.0,
                    _ => parse_value(t.next(), line)?,
                };
                let (i, j) = (row - 1, col - 1);
                triplets.push((i, j, v));
                if i != j {
                    match symmetry {
                        Symmetry::General => {}
                        Symmetry::Symmetric => triplets.push((j, i, v)),
                        Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
                    }
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(Error::Parse { line: size_line, msg: format!("declared {nnz} entries, found {seen}") });
            }
            Ok(ConstraintMatrix::from_csr(CsrMatrix::from_triplets(nrows, ncols, &triplets)?))
        }
        Format::Array => {
            let mut a = DMatrix::zeros(nrows, ncols);
            let mut slots = Vec::with_capacity(nrows * ncols);
            for j in 0..ncols {
                let start = match symmetry {
                    Symmetry::General => 0,
                    Symmetry::Symmetric => j,
                    Symmetry::SkewSymmetric => j + 1,
                };
                slots.extend((start..nrows).map(|i| (i, j)));
            }
            let mut values = body.map(|(line, l)| (line, l.trim()));
            for &(i, j) in &slots {
                let (line, l) = values
                    .next()
                    .ok_or_else(|| Error::Parse { line: size_line, msg: format!("expected {} values", slots.len()) })?;
                let v = parse_value(l.split_whitespace().next(), line)?;
                a[(i, j)] = v;
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => a[(j, i)] = v,
                    Symmetry::SkewSymmetric => a[(j, i)] = -v,
                }
            }
            if let Some((line, _)) = values.next() {
                return Err(Error::Parse { line, msg: "more values than the declared size".into() });
            }
            Ok(ConstraintMatrix::from_dense(a))
        }
    }
}

/// Whitespace separated numbers; `%` and `#` start comment lines.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        for tok in t.split_whitespace() {
            out.push(parse_value(Some(tok), i + 1)?);
        }
    }
    Ok(DVector::from_vec(out))
}

pub fn read_matrix_market(path: &Path) -> Result<ConstraintMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

/// Loads `A` from a Matrix Market file and `b` from a vector file, or `b = 0` without one.
pub fn load_matrix_market(path_a: &Path, path_b: Option<&Path>) -> Result<ProblemInstance> {
    let a = read_matrix_market(path_a)?;
    let b = match path_b {
        Some(p) => read_vector(p)?,
        None => DVector::zeros(a.nrows()),
    };
    if b.len() != a.nrows() {
        return Err(Error::Dimension { what: "right-hand side", expected: a.nrows(), found: b.len() });
    }
    ProblemInstance::new(a, b)
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sparse matrices are written in coordinate format, dense ones in array format.
pub fn format_matrix_market(a: &ConstraintMatrix) -> String {
    let mut s = String::new();
    if a.is_sparse() {
        let mut entries = Vec::with_capacity(a.nnz());
        a.for_each_nonzero(|i, j, v| entries.push((i, j, v)));
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        s.push_str(&format!("{} {} {}\n", a.nrows(), a.ncols(), entries.len()));
        for (i, j, v) in entries {
            s.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_value(v)));
        }
    } else {
        let d = a.to_dense();
        s.push_str("%%MatrixMarket matrix array real general\n");
        s.push_str(&format!("{} {}\n", a.nrows(), a.ncols()));
        for v in d.iter() {
            s.push_str(&fmt_value(*v));
            s.push('\n');
        }
    }
    s
}

pub fn format_vector(v: &DVector<f64>) -> String {
    v.iter().map(|x| fmt_value(*x) + "\n").collect()
}

pub fn write_matrix_market(a: &ConstraintMatrix, path: &Path) -> Result<()> {
    fs::File::create(path)?.write_all(format_matrix_market(a).as_bytes())?;
    Ok(())
}

pub fn write_vector(v: &DVector<f64>, path: &Path) -> Result<()> {
    fs::File::create(path)?.write_all(format_vector(v).as_bytes())?;
    Ok(())
}
