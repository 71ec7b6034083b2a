//! Frame persistence: binary PGM (P5) images and a CSV sidecar per
//! sequence.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{SimError, TactileFrame};
use crate::geom::Vec3;

pub const SEQUENCE_CSV_HEADER: &str = "frame_index,force_N,x_mm,y_mm,z_mm,pixel_sum";

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io(format!("{}: {e}", path.display()))
}

pub fn write_pgm(path: &Path, frame: &TactileFrame) -> Result<(), SimError> {
    let mut buf = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    buf.extend_from_slice(&frame.pixels);
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Reads a P5 image. Force, pose and index are not stored in the image and
/// come back zeroed.
pub fn read_pgm(path: &Path) -> Result<TactileFrame, SimError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut pos = 0;
    let mut token = || -> Result<String, SimError> {
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(io_err(path, "truncated header"));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(io_err(path, "not a binary PGM"));
    }
    let mut num = || -> Result<usize, SimError> { token()?.parse().map_err(|e| io_err(path, e)) };
    let (w, h, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(io_err(path, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates header and raster
    let start = pos + 1;
    if data.len() != start + w * h {
        return Err(io_err(path, format!("expected {} raster bytes, found {}", w * h, data.len().saturating_sub(start))));
    }
    let mut f = TactileFrame::blank(w, h);
    f.pixels.copy_from_slice(&data[start..]);
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRow {
    pub frame_index: u64,
    pub force: f64,
    pub pose: Vec3,
    pub pixel_sum: u64,
}

impl From<&TactileFrame> for SequenceRow {
    fn from(f: &TactileFrame) -> Self {
        Self { frame_index: f.frame_index, force: f.applied_force, pose: f.probe_pose, pixel_sum: f.pixel_sum() }
    }
}

pub fn write_sequence_csv(path: &Path, frames: &[TactileFrame]) -> Result<(), SimError> {
    let mut out = Vec::new();
    writeln!(out, "{SEQUENCE_CSV_HEADER}").expect("vec write");
    for f in frames {
        let r = SequenceRow::from(f);
        writeln!(out, "{},{},{},{},{},{}", r.frame_index, r.force, r.pose.x, r.pose.y, r.pose.z, r.pixel_sum)
            .expect("vec write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_sequence_csv(path: &Path) -> Result<Vec<SequenceRow>, SimError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SEQUENCE_CSV_HEADER) {
        return Err(io_err(path, "missing or unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |m: &str| io_err(path, format!("line {}: {m}", i + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let f = |k: usize| cols[k].trim().parse::<f64>().map_err(|_| bad("bad number"));
            let u = |k: usize| cols[k].trim().parse::<u64>().map_err(|_| bad("bad integer"));
            Ok(SequenceRow { frame_index: u(0)?, force: f(1)?, pose: Vec3::new(f(2)?, f(3)?, f(4)?), pixel_sum: u(5)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let mut f = TactileFrame::blank(w, h);
            let mut s = seed;
            for p in f.pixels.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *p = (s >> 56) as u8;
            }
            let path = dir.path().join("f.pgm");
            write_pgm(&path, &f).unwrap();
            let back = read_pgm(&path).unwrap();
            prop_assert_eq!(back.pixels, f.pixels);
            prop_assert_eq!((back.width, back.height), (w, h));
        }
    }

    #[test]
    fn csv_round_trip_preserves_floats() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = TactileFrame::blank(2, 2);
        a.pixels = vec![1, 2, 3, 250];
        a.applied_force = 3.141_592_653_589_793;
        a.probe_pose = Vec3::new(38.25, 53.25, -2.1);
        a.frame_index = 7;
        let path = dir.path().join("seq.csv");
        write_sequence_csv(&path, &[a.clone()]).unwrap();
        let rows = read_sequence_csv(&path).unwrap();
        assert_eq!(rows, vec![SequenceRow::from(&a)]);
        assert_eq!(rows[0].pixel_sum, 256);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgm");
        fs::write(&p, b"P2\n1 1\n255\n0").unwrap();
        assert!(read_pgm(&p).is_err());
        fs::write(&p, b"P5\n4 4\n255\n\x00").unwrap();
        assert!(read_pgm(&p).is_err());
        let c = dir.path().join("bad.csv");
        fs::write(&c, "frame_index,force_N,x_mm,y_mm,z_mm,pixel_sum\n1,2,3\n").unwrap();
        assert!(read_sequence_csv(&c).is_err());
    }
}
