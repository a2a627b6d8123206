//! Adjacency export: a headered text grid that round-trips exactly, and an
//! 8-bit grayscale map with `[-1, 1]` mapped affinely onto `[0, 255]`.

use std::fmt::Write as _;
use std::path::Path;

use image::{GrayImage, ImageFormat};
use simgcn_core::linalg::Matrix;

use crate::error::AppError;

pub fn to_text(a: &Matrix) -> String {
    let mut s = String::new();
    writeln!(s, "# adjacency rows={} cols={}", a.rows(), a.cols()).unwrap();
    for r in 0..a.rows() {
        let row: Vec<String> = a.row(r).iter().map(|v| format!("{v}")).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    s
}

pub fn parse_text(text: &str) -> Result<Matrix, AppError> {
    let bad = |m: String| AppError::Data(format!("adjacency text: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty".into()))?;
    let dims: Vec<usize> = header
        .strip_prefix("# adjacency ")
        .ok_or_else(|| bad(format!("bad header {header:?}")))?
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| bad(format!("bad header field {kv:?}")))
        })
        .collect::<Result<_, _>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("header needs rows and cols: {header:?}")));
    };
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|e| bad(format!("{tok:?}: {e}")))?,
            );
        }
    }
    Matrix::from_vec(rows, cols, values).map_err(|e| bad(e.to_string()))
}

pub fn to_gray(a: &Matrix) -> GrayImage {
    let px = a
        .as_slice()
        .iter()
        .map(|v| ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(a.cols() as u32, a.rows() as u32, px).expect("buffer matches dimensions")
}

/// Writes `<stem>.txt` and `<stem>.png`.
pub fn write(stem: &Path, a: &Matrix) -> Result<(), AppError> {
    let txt = stem.with_extension("txt");
    std::fs::write(&txt, to_text(a)).map_err(|e| AppError::io(&txt, e))?;
    let png = stem.with_extension("png");
    to_gray(a)
        .save_with_format(&png, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => AppError::io(&png, io),
            other => AppError::Data(format!("{}: {other}", png.display())),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let a = Matrix::from_rows(&[
            [1.0, -0.123_456_789_012_345_68],
            [1e-300, 0.3333333333333333],
        ])
        .unwrap();
        let back = parse_text(&to_text(&a)).unwrap();
        assert_eq!(back, a);
        assert!(parse_text("# adjacency rows=2 cols=2\n1 2 3\n").is_err());
        assert!(parse_text("nonsense").is_err());
    }

    #[test]
    fn gray_levels() {
        let a = Matrix::from_rows(&[[-1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(to_gray(&a).into_raw(), vec![0, 128, 255]);
    }
}
