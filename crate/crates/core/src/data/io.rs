//! Dataset file formats (byte-exact layouts in `docs/formats.md`).
//!
//! CSV is the inspectable interchange format: a header row with the
//! schema's column names (any order), then one sample per row, strict
//! float syntax, finite values only. The binary format is the fast
//! path: a `PCDS` header carrying the schema plus split/scaler/truth
//! metadata, followed by `X` row-major and `y`, little-endian `f64`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{DataError, Dataset, DatasetSchema, ScalerStats, ScalingMode, SplitKind};
use crate::matrix::Matrix;

/// Strict cell parser: accepts ordinary decimal/scientific notation,
/// rejects empty cells and anything non-finite.
fn parse_cell(cell: &str, line: usize) -> Result<f64, DataError> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(DataError::Parse {
            line,
            message: "empty cell".into(),
        });
    }
    let value: f64 = trimmed.parse().map_err(|_| DataError::Parse {
        line,
        message: format!("'{trimmed}' is not a number"),
    })?;
    if !value.is_finite() {
        return Err(DataError::Parse {
            line,
            message: format!("non-finite value '{trimmed}'"),
        });
    }
    Ok(value)
}

/// Write a dataset as CSV in canonical column order (inputs in schema
/// order, output last).
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let schema = dataset.schema();
    writeln!(
        w,
        "{},{}",
        schema.input_names.join(","),
        schema.output_name
    )?;
    for r in 0..dataset.len() {
        let mut line = String::new();
        for v in dataset.x().row(r) {
            line.push_str(&format!("{v}"));
            line.push(',');
        }
        line.push_str(&format!("{}", dataset.y()[r]));
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Load a CSV against a schema. The header must contain exactly the
/// schema's columns (any order); rows are mapped by name. Line numbers
/// in errors are 1-based and count the header.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or(DataError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header?;
    let file_columns: Vec<String> = header
        .trim_end_matches('\r')
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();

    let d = schema.input_dim();
    // position in file row -> destination (input index, or d for output)
    let mut destinations = Vec::with_capacity(file_columns.len());
    let mut seen = BTreeSet::new();
    for name in &file_columns {
        if !seen.insert(name.clone()) {
            return Err(DataError::Parse {
                line: 1,
                message: format!("duplicate column '{name}'"),
            });
        }
        if let Some(idx) = schema.input_names.iter().position(|n| n == name) {
            destinations.push(idx);
        } else if *name == schema.output_name {
            destinations.push(d);
        } else {
            return Err(DataError::Parse {
                line: 1,
                message: format!("column '{name}' not in schema"),
            });
        }
    }
    if destinations.len() != d + 1 {
        let missing: Vec<&str> = schema
            .input_names
            .iter()
            .chain(std::iter::once(&schema.output_name))
            .filter(|n| !file_columns.contains(n))
            .map(|s| s.as_str())
            .collect();
        return Err(DataError::Parse {
            line: 1,
            message: format!("missing columns: {}", missing.join(", ")),
        });
    }

    let mut x_values = Vec::new();
    let mut y = Vec::new();
    for (index, line) in lines {
        let lineno = index + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d + 1 {
            return Err(DataError::Parse {
                line: lineno,
                message: format!("expected {} cells, found {}", d + 1, cells.len()),
            });
        }
        let mut row = vec![0.0; d + 1];
        for (cell, &dest) in cells.iter().zip(&destinations) {
            row[dest] = parse_cell(cell, lineno)?;
        }
        x_values.extend_from_slice(&row[..d]);
        y.push(row[d]);
    }

    let n = y.len();
    let x = Matrix::from_values(n, d, x_values)
        .map_err(|e| DataError::Shape(format!("assembling matrix: {e}")))?;
    Dataset::new(schema.clone(), x, y, None, None, None)
}

const BIN_MAGIC: &[u8; 4] = b"PCDS";
const BIN_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    Ok(read_exact::<_, 1>(r)?[0])
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_le_bytes(read_exact(r)?))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, DataError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(DataError::Format(format!("string length {len} too large")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| DataError::Format(format!("bad utf-8: {e}")))
}

/// Write the binary dataset format.
pub fn save_binary(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(BIN_MAGIC)?;
    write_u32(&mut w, BIN_VERSION)?;
    let schema = dataset.schema();
    write_u32(&mut w, schema.input_dim() as u32)?;
    write_u64(&mut w, dataset.len() as u64)?;
    for name in &schema.input_names {
        write_string(&mut w, name)?;
    }
    write_string(&mut w, &schema.output_name)?;
    write_f64(&mut w, schema.output_norm_constant)?;
    w.write_all(&[match schema.input_scaling {
        ScalingMode::Standardize => 0u8,
        ScalingMode::None => 1u8,
    }])?;
    w.write_all(&[match dataset.split() {
        None => 0u8,
        Some(SplitKind::Train) => 1,
        Some(SplitKind::Val) => 2,
        Some(SplitKind::Test) => 3,
    }])?;
    match dataset.scaler() {
        None => w.write_all(&[0u8])?,
        Some(s) => {
            w.write_all(&[1u8])?;
            for &m in &s.mean {
                write_f64(&mut w, m)?;
            }
            for &sd in &s.std {
                write_f64(&mut w, sd)?;
            }
            write_f64(&mut w, s.output_scale)?;
        }
    }
    match dataset.truth_drivers() {
        None => w.write_all(&[0u8])?,
        Some(t) => {
            w.write_all(&[1u8])?;
            write_u32(&mut w, t.len() as u32)?;
            for &j in t {
                write_u32(&mut w, j as u32)?;
            }
        }
    }
    for &v in dataset.x().values() {
        write_f64(&mut w, v)?;
    }
    for &v in dataset.y() {
        write_f64(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Read the binary dataset format.
pub fn load_binary(path: &Path) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let magic = read_exact::<_, 4>(&mut r)?;
    if &magic != BIN_MAGIC {
        return Err(DataError::Format(format!(
            "bad magic {magic:?}, expected {BIN_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != BIN_VERSION {
        return Err(DataError::Format(format!("unsupported version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let mut input_names = Vec::with_capacity(d);
    for _ in 0..d {
        input_names.push(read_string(&mut r)?);
    }
    let output_name = read_string(&mut r)?;
    let constant = read_f64(&mut r)?;
    let scaling = match read_u8(&mut r)? {
        0 => ScalingMode::Standardize,
        1 => ScalingMode::None,
        other => return Err(DataError::Format(format!("bad scaling byte {other}"))),
    };
    let schema = DatasetSchema::new(input_names, output_name, constant, scaling)?;
    let split = match read_u8(&mut r)? {
        0 => None,
        1 => Some(SplitKind::Train),
        2 => Some(SplitKind::Val),
        3 => Some(SplitKind::Test),
        other => return Err(DataError::Format(format!("bad split byte {other}"))),
    };
    let scaler = match read_u8(&mut r)? {
        0 => None,
        1 => {
            let mut mean = vec![0.0; d];
            for m in &mut mean {
                *m = read_f64(&mut r)?;
            }
            let mut std = vec![0.0; d];
            for s in &mut std {
                *s = read_f64(&mut r)?;
            }
            let output_scale = read_f64(&mut r)?;
            Some(ScalerStats {
                mean,
                std,
                output_scale,
            })
        }
        other => return Err(DataError::Format(format!("bad scaler byte {other}"))),
    };
    let truth = match read_u8(&mut r)? {
        0 => None,
        1 => {
            let count = read_u32(&mut r)? as usize;
            let mut set = BTreeSet::new();
            for _ in 0..count {
                set.insert(read_u32(&mut r)? as usize);
            }
            Some(set)
        }
        other => return Err(DataError::Format(format!("bad truth byte {other}"))),
    };
    let mut x_values = vec![0.0; n * d];
    for v in &mut x_values {
        *v = read_f64(&mut r)?;
    }
    let mut y = vec![0.0; n];
    for v in &mut y {
        *v = read_f64(&mut r)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DataError::Format("trailing bytes".into()));
    }
    let x = Matrix::from_values(n, d, x_values)
        .map_err(|e| DataError::Format(format!("sample matrix: {e}")))?;
    Dataset::new(schema, x, y, split, scaler, truth)
}

/// Detect the format from the extension: `.csv` loads CSV (requires the
/// schema), anything else the binary format.
pub fn load_dataset_auto(path: &Path, schema: Option<&DatasetSchema>) -> Result<Dataset, DataError> {
    if path.extension().map(|e| e == "csv").unwrap_or(false) {
        let schema = schema.ok_or_else(|| {
            DataError::Schema("loading CSV requires a schema file".into())
        })?;
        load_csv(path, schema)
    } else {
        load_binary(path)
    }
}

/// Ground-truth driver sidecar: `#` comments allowed, one index per line.
pub fn write_truth_file(path: &Path, drivers: &BTreeSet<usize>) -> Result<(), DataError> {
    let mut text = String::from("# ground-truth driver indices, one per line\n");
    for j in drivers {
        text.push_str(&format!("{j}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_truth_file(path: &Path) -> Result<BTreeSet<usize>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut set = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let idx: usize = line.parse().map_err(|_| DataError::Parse {
            line: i + 1,
            message: format!("'{line}' is not an index"),
        })?;
        set.insert(idx);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_scaler, generate_synthetic, Mechanism, SyntheticSpec};

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            d: 4,
            n_samples: 50,
            drivers: [1usize, 2].into_iter().collect(),
            mechanism: Mechanism::SparseLinear,
            spurious_corr: 0.3,
            noise_std: 0.05,
            shift: 0.0,
            seed: 9,
        }
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let ds = generate_synthetic(&spec()).unwrap();
        let stats = fit_scaler(&ds).unwrap();
        let ds = stats.apply(&ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        save_binary(&ds, &path).unwrap();
        let loaded = load_binary(&path).unwrap();
        assert_eq!(loaded, ds);
        assert_eq!(
            loaded
                .x()
                .values()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            ds.x().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let ds = generate_synthetic(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        save_csv(&ds, &path).unwrap();
        let loaded = load_csv(&path, ds.schema()).unwrap();
        assert_eq!(loaded.len(), ds.len());
        // shortest-round-trip float formatting: values survive exactly
        for (a, b) in ds.x().values().iter().zip(loaded.x().values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn csv_shuffled_columns_map_by_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "y,x1,x0\n10,2,1\n20,4,3\n").unwrap();
        let schema = DatasetSchema::generic(2);
        let ds = load_csv(&path, &schema).unwrap();
        assert_eq!(ds.x().row(0), &[1.0, 2.0]);
        assert_eq!(ds.x().row(1), &[3.0, 4.0]);
        assert_eq!(ds.y(), &[10.0, 20.0]);
    }

    #[test]
    fn csv_nan_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "x0,x1,y\n1,2,3\n1,NaN,3\n").unwrap();
        match load_csv(&path, &DatasetSchema::generic(2)) {
            Err(DataError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("non-finite"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_row_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "x0,x1,y\n1,2,3\n1,2\n").unwrap();
        match load_csv(&path, &DatasetSchema::generic(2)) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "x0,y\n1,3\n").unwrap();
        match load_csv(&path, &DatasetSchema::generic(2)) {
            Err(DataError::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("x1"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truth_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.txt");
        let drivers: BTreeSet<usize> = [3usize, 1, 8].into_iter().collect();
        write_truth_file(&path, &drivers).unwrap();
        assert_eq!(read_truth_file(&path).unwrap(), drivers);
    }
}
