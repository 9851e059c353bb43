//! Point-cloud CSV and PGM image input/output.
//!
//! Numbers are written with 12 significant digits so output files diff
//! cleanly across platforms.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Formats with 12 significant digits, in the shortest form that reads back
/// to the same value.
pub fn format_sig(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a point cloud with header `x1,...,xd,weight`. Without a `weight`
/// column every point gets the same mass. Weights are normalized.
pub fn read_measure_csv(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_measure_csv_from(file, path)
}

fn read_measure_csv_from<R: Read>(reader: R, path: &Path) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(parse_err(path, 1, "empty file"));
    }
    let has_weight = headers.iter().next_back() == Some("weight");
    let d = headers.len() - usize::from(has_weight);
    if d == 0 {
        return Err(parse_err(path, 1, "no coordinate columns"));
    }
    for (j, name) in headers.iter().take(d).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(parse_err(
                path,
                1,
                format!("expected column x{}, found {name:?}", j + 1),
            ));
        }
    }

    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: not a number: {field:?}", j + 1)))?;
            if !value.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", j + 1)));
            }
            if j < d {
                coords.push(value);
            } else if value < 0.0 {
                return Err(parse_err(path, line, "negative weight"));
            } else {
                weights.push(value);
            }
        }
    }
    let m = coords.len() / d;
    if m == 0 {
        return Err(parse_err(path, 1, "no data rows"));
    }
    // rows are points; the measure stores points as columns
    let support = Array2::from_shape_vec((m, d), coords)
        .expect("row count checked")
        .reversed_axes();
    let weights = if has_weight {
        Array1::from(weights)
    } else {
        Array1::from_elem(m, 1.0)
    };
    DiscreteMeasure::new(support.as_standard_layout().to_owned(), weights)
        .map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Writes `points` (`d x m`) and `weights` with header `x1,...,xd,weight`.
pub fn write_points_csv(path: impl AsRef<Path>, points: ArrayView2<f64>, weights: &[f64]) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(points.ncols(), weights.len(), "one weight per point");
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write_points(&mut out, points, weights).map_err(|e| io_err(path, e))
}

fn write_points<W: Write>(out: &mut W, points: ArrayView2<f64>, weights: &[f64]) -> std::io::Result<()> {
    let header: Vec<String> = (1..=points.nrows())
        .map(|j| format!("x{j}"))
        .chain(["weight".to_string()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (col, &w) in points.columns().into_iter().zip(weights) {
        let fields: Vec<String> = col.iter().copied().chain([w]).map(format_sig).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()
}

pub fn write_measure_csv(path: impl AsRef<Path>, measure: &DiscreteMeasure) -> Result<()> {
    write_points_csv(path, measure.support(), &measure.weights().to_vec())
}

/// Reads a binary (P5) or ASCII (P2) PGM image as `height x width`
/// intensities divided by the file's maxval.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse_pgm(&bytes).map_err(|msg| parse_err(path, 0, msg))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Array2<f64>, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(format!("unsupported PGM magic {other:?}")),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or(format!("missing {name}"))?;
        *slot = tok.parse().map_err(|_| format!("bad {name}: {tok:?}"))?;
    }
    let [w, h, maxval] = header;
    if w == 0 || h == 0 {
        return Err("empty image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(w * h);
    if binary {
        // a single whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let need = w * h * if wide { 2 } else { 1 };
        let raster = bytes.get(pos..pos + need).ok_or("truncated raster")?;
        if wide {
            values.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale),
            );
        } else {
            values.extend(raster.iter().map(|&b| b as f64 / scale));
        }
    } else {
        for i in 0..w * h {
            let tok = next_token(bytes, &mut pos).ok_or(format!("truncated raster at sample {i}"))?;
            let v: usize = tok.parse().map_err(|_| format!("bad sample {tok:?}"))?;
            values.push(v as f64 / scale);
        }
    }
    if values.iter().any(|&v| v > 1.0) {
        return Err("sample exceeds maxval".into());
    }
    Ok(Array2::from_shape_vec((h, w), values).expect("size checked"))
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Writes intensities in `[0, 1]` as an 8-bit binary PGM.
pub fn write_pgm(path: impl AsRef<Path>, image: ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", image.ncols(), image.nrows()).into_bytes();
    bytes.extend(image.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Scales a nonnegative image so its largest pixel is 1.
pub fn normalize_for_display(image: ArrayView2<f64>) -> Array2<f64> {
    let max = image.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max > 0.0 {
        image.mapv(|v| v / max)
    } else {
        image.to_owned()
    }
}
