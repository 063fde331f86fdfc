//! KITTI odometry files, grayscale images and CSV reports.
//!
//! Dataset layout:
//!
//! ```text
//! <root>/sequences/<seq>/calib.txt
//! <root>/sequences/<seq>/image_0/000000.png   (left)
//! <root>/sequences/<seq>/image_1/000000.png   (right)
//! <root>/poses/<seq>.txt                       (optional ground truth)
//! ```
//!
//! Frames may also be stored as binary PGM (`.pgm`).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::features::Image;
use crate::geometry::{Pose, Rotation, StereoRig};
use crate::metrics::{ReliabilityReport, SegmentErrors, Trajectory};
use crate::pipeline::FrameDiagnostics;

/// Largest accepted `|RᵀR − I|` entry of a pose's rotation block.
pub const ROTATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what}, line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Intrinsics and baseline of the grayscale pair, without an image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub focal: f64,
    pub cu: f64,
    pub cv: f64,
    pub baseline: f64,
}

impl Calibration {
    pub fn rig(&self, width: u32, height: u32) -> Result<StereoRig, IoError> {
        StereoRig::new(self.focal, (self.cu, self.cv), self.baseline, (width, height))
            .map_err(|e| IoError::Dataset(e.to_string()))
    }
}

fn parse_reals(what: &'static str, line: usize, fields: &str) -> Result<Vec<f64>, IoError> {
    fields
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IoError::Parse {
                    what,
                    line,
                    message: format!("not a finite number: '{t}'"),
                })
        })
        .collect()
}

/// Parses the `P0:`/`P1:` projection matrices of a KITTI `calib.txt`.
///
/// Other lines (`P2`, `P3`, `Tr`, ...) are ignored; line order and spacing do
/// not matter.
pub fn parse_calibration(text: &str) -> Result<Calibration, IoError> {
    const WHAT: &str = "calibration";
    let mut p0 = None;
    let mut p1 = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some((key, rest)) = raw.split_once(':') else {
            continue;
        };
        let slot = match key.trim() {
            "P0" => &mut p0,
            "P1" => &mut p1,
            _ => continue,
        };
        let v = parse_reals(WHAT, line, rest)?;
        if v.len() != 12 {
            return Err(IoError::Parse {
                what: WHAT,
                line,
                message: format!("{} needs 12 values, found {}", key.trim(), v.len()),
            });
        }
        *slot = Some((line, v));
    }
    let missing = |k: &str| IoError::Parse {
        what: WHAT,
        line: 0,
        message: format!("missing line '{k}:'"),
    };
    let (_, p0) = p0.ok_or_else(|| missing("P0"))?;
    let (p1_line, p1) = p1.ok_or_else(|| missing("P1"))?;
    let focal = p0[0];
    if focal.is_nan() || focal <= 0.0 {
        return Err(IoError::Parse {
            what: WHAT,
            line: 0,
            message: format!("P0 focal length must be > 0, got {focal}"),
        });
    }
    let baseline = -p1[3] / p1[0];
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(IoError::Parse {
            what: WHAT,
            line: p1_line,
            message: format!("P1 gives non-positive baseline {baseline}"),
        });
    }
    Ok(Calibration {
        focal,
        cu: p0[2],
        cv: p0[6],
        baseline,
    })
}

fn pose_from_row(line: usize, v: &[f64]) -> Result<Pose, IoError> {
    const WHAT: &str = "poses";
    let m = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let residual = (m.transpose() * m - Matrix3::identity()).amax();
    if residual > ROTATION_TOLERANCE || m.determinant() <= 0.0 {
        return Err(IoError::Parse {
            what: WHAT,
            line,
            message: format!("rotation block is not a rotation (|RᵀR − I| = {residual:.2e})"),
        });
    }
    let r = Rotation::from_matrix(m).ok_or_else(|| IoError::Parse {
        what: WHAT,
        line,
        message: "rotation block is not a rotation".into(),
    })?;
    Ok(Pose::new(r, Vector3::new(v[3], v[7], v[11])))
}

/// Parses a KITTI pose file: 12 reals per line, row-major `[R | t]`.
/// Blank lines are skipped. The first pose must be the identity.
pub fn read_poses(text: &str) -> Result<Trajectory, IoError> {
    const WHAT: &str = "poses";
    let mut poses = Vec::new();
    let mut first_line = 0;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let v = parse_reals(WHAT, line, raw)?;
        if v.len() != 12 {
            return Err(IoError::Parse {
                what: WHAT,
                line,
                message: format!("expected 12 values, found {}", v.len()),
            });
        }
        if poses.is_empty() {
            first_line = line;
        }
        poses.push(pose_from_row(line, &v)?);
    }
    Trajectory::from_poses(poses).map_err(|e| IoError::Parse {
        what: WHAT,
        line: first_line,
        message: e.to_string(),
    })
}

/// Shortest representation that parses back to the same `f64`.
fn format_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_owned()
    } else if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// KITTI pose format, one newline-terminated line per frame. Values are
/// written in shortest round-trip form, so reading them back is exact.
pub fn write_trajectory(t: &Trajectory) -> String {
    let mut s = String::new();
    for p in t.poses() {
        let m = p.to_matrix();
        for row in 0..3 {
            for col in 0..4 {
                if row + col > 0 {
                    s.push(' ');
                }
                s.push_str(&format_real(m[(row, col)]));
            }
        }
        s.push('\n');
    }
    s
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Image, IoError> {
    let bad = |m: &str| IoError::Image {
        path: path.to_path_buf(),
        message: format!("PGM: {m}"),
    };
    // Header: magic, width, height, maxval, separated by whitespace and
    // optional comments, then exactly one whitespace byte.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary (P5) PGM is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let data = bytes
        .get(pos + 1..pos + 1 + w * h)
        .ok_or_else(|| bad("truncated pixel data"))?;
    Image::new(w, h, data.to_vec()).ok_or_else(|| bad("size mismatch"))
}

/// Loads an 8-bit grayscale image. Binary PGM is decoded natively; other
/// formats go through the `image` crate and colour is reduced to luma.
pub fn load_image(path: &Path) -> Result<Image, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"P5") {
        return parse_pgm(path, &bytes);
    }
    let decoded = image::load_from_memory(&bytes).map_err(|e| IoError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let luma = decoded.to_luma8();
    let (w, h) = luma.dimensions();
    Ok(Image::new(w as usize, h as usize, luma.into_raw()).expect("buffer matches dimensions"))
}

pub fn save_pgm(path: &Path, img: &Image) -> Result<(), IoError> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    fs::write(path, out).map_err(io_err(path))
}

/// A KITTI odometry sequence on disk.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub root: PathBuf,
    pub sequence: String,
    pub frame_count: usize,
    pub rig: StereoRig,
    pub ground_truth: Option<Trajectory>,
    extension: String,
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("png" | "pgm")))
        .collect();
    files.sort();
    Ok(files)
}

impl DatasetHandle {
    pub fn open(root: &Path, sequence: &str) -> Result<Self, IoError> {
        let seq_dir = root.join("sequences").join(sequence);
        let calib = parse_calibration(&read_text(&seq_dir.join("calib.txt"))?)?;
        let left = frame_files(&seq_dir.join("image_0"))?;
        let right = frame_files(&seq_dir.join("image_1"))?;
        if left.len() != right.len() {
            return Err(IoError::Dataset(format!(
                "image_0 has {} frames but image_1 has {}",
                left.len(),
                right.len()
            )));
        }
        let first = left
            .first()
            .ok_or_else(|| IoError::Dataset(format!("no frames in {}", seq_dir.join("image_0").display())))?;
        let extension = first.extension().and_then(|e| e.to_str()).unwrap_or("png").to_owned();
        let probe = load_image(first)?;
        let rig = calib.rig(probe.width as u32, probe.height as u32)?;
        let gt_path = root.join("poses").join(format!("{sequence}.txt"));
        let ground_truth = if gt_path.exists() {
            Some(read_poses(&read_text(&gt_path)?)?)
        } else {
            None
        };
        let handle = Self {
            root: root.to_path_buf(),
            sequence: sequence.to_owned(),
            frame_count: left.len(),
            rig,
            ground_truth,
            extension,
        };
        for k in [0, handle.frame_count - 1] {
            for p in [handle.image_path(k, 0), handle.image_path(k, 1)] {
                if !p.exists() {
                    return Err(IoError::Dataset(format!(
                        "frames must be numbered from 000000; missing {}",
                        p.display()
                    )));
                }
            }
        }
        Ok(handle)
    }

    /// Path of frame `k` in camera `cam` (0 = left, 1 = right).
    pub fn image_path(&self, k: usize, cam: u8) -> PathBuf {
        self.root
            .join("sequences")
            .join(&self.sequence)
            .join(format!("image_{cam}"))
            .join(format!("{k:06}.{}", self.extension))
    }

    pub fn load_stereo(&self, k: usize) -> Result<(Image, Image), IoError> {
        Ok((load_image(&self.image_path(k, 0))?, load_image(&self.image_path(k, 1))?))
    }
}

/// Writes the calibration of `rig` in KITTI `calib.txt` form (P0 and P1).
pub fn format_calibration(rig: &StereoRig) -> String {
    let mut s = String::new();
    let row = |tx: f64| {
        [
            rig.focal, 0.0, rig.cu, tx, 0.0, rig.focal, rig.cv, 0.0, 0.0, 0.0, 1.0, 0.0,
        ]
        .iter()
        .map(|v| format_real(*v))
        .collect::<Vec<_>>()
        .join(" ")
    };
    let _ = writeln!(s, "P0: {}", row(0.0));
    let _ = writeln!(s, "P1: {}", row(-rig.focal * rig.baseline));
    s
}

/// `frame,rpe_trans_m,rpe_rot_rad,ape_trans_m,ape_rot_rad`; relative columns
/// are empty at the first frame. Every `stride`-th frame is kept.
pub fn write_reliability_csv<W: Write>(out: W, report: &ReliabilityReport, stride: usize) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "rpe_trans_m", "rpe_rot_rad", "ape_trans_m", "ape_rot_rad"])?;
    let stride = stride.max(1);
    for (i, ape) in report.absolute.iter().enumerate().step_by(stride) {
        let (rt, rr) = match i.checked_sub(1).and_then(|j| report.relative.get(j)) {
            Some(e) => (format_real(e.translation), format_real(e.rotation)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            ape.frame.to_string(),
            rt,
            rr,
            format_real(ape.translation),
            format_real(ape.rotation),
        ])?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

/// `length_m,t_rel_pct,r_rel_deg_per_100m,segments`, one row per length.
pub fn write_evaluation_csv<W: Write>(out: W, errors: &SegmentErrors) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["length_m", "t_rel_pct", "r_rel_deg_per_100m", "segments"])?;
    for l in &errors.per_length {
        w.write_record([
            format_real(l.length),
            format_real(l.t_rel),
            format_real(l.r_rel),
            l.segments.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

/// One row per processed frame pair; see [`FrameDiagnostics`] for columns.
pub fn write_diagnostics_csv<W: Write>(out: W, rows: &[FrameDiagnostics]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(DIAGNOSTICS_HEADER)?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

pub const DIAGNOSTICS_HEADER: [&str; 11] = [
    "frame",
    "matches",
    "fwd_inliers",
    "bwd_inliers",
    "fwd_rms_px",
    "bwd_rms_px",
    "fusion_degenerate",
    "failed",
    "frontend_ms",
    "estimate_ms",
    "total_ms",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3_exp;
    use crate::metrics::reliability_report;

    const SEQ00_CALIB: &str = "\
P0: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 0.000000000000e+00 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P1: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 -3.861448000000e+02 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P2: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 4.538225000000e+01 0.000000000000e+00 7.188560000000e+02 1.852157000000e+02 -1.130887000000e-01 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 3.779761000000e-03
";

    #[test]
    fn sequence_00_calibration() {
        let c = parse_calibration(SEQ00_CALIB).unwrap();
        assert_eq!(c.focal, 718.856);
        assert_eq!((c.cu, c.cv), (607.1928, 185.2157));
        assert!((c.baseline - 386.1448 / 718.856).abs() < 1e-15);
        assert!((c.baseline - 0.5372).abs() < 1e-4);
    }

    #[test]
    fn calibration_is_order_and_space_insensitive() {
        let mut lines: Vec<&str> = SEQ00_CALIB.lines().collect();
        lines.reverse();
        let spaced = lines.join("\n").replace(' ', "   \t");
        assert_eq!(
            parse_calibration(&spaced).unwrap(),
            parse_calibration(SEQ00_CALIB).unwrap()
        );
    }

    #[test]
    fn calibration_errors() {
        let zero = SEQ00_CALIB.replace("-3.861448000000e+02", "0");
        assert!(matches!(parse_calibration(&zero), Err(IoError::Parse { line: 2, .. })));
        let short = SEQ00_CALIB.replacen(" 0.000000000000e+00\n", "\n", 1);
        match parse_calibration(&short) {
            Err(IoError::Parse { line: 1, message, .. }) => assert!(message.contains("found 11")),
            other => panic!("{other:?}"),
        }
        let no_p1: String = SEQ00_CALIB
            .lines()
            .filter(|l| !l.starts_with("P1"))
            .collect::<Vec<_>>()
            .join("\n");
        let err = parse_calibration(&no_p1).unwrap_err().to_string();
        assert!(err.contains("P1"), "{err}");
    }

    #[test]
    fn pose_lines() {
        let t = read_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 5 0 1 0 0 0 0 1 0\n").unwrap();
        assert_eq!(t.poses()[0], Pose::identity());
        assert_eq!(t.poses()[1], Pose::from_translation(5.0, 0.0, 0.0));
    }

    #[test]
    fn pose_errors_name_lines() {
        let e = read_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 x 0 0 1 0\n").unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 2, .. }));
        let e = read_poses("1 0 0 0 0 1 0 0 0 0 1 0\n\n1 0 0 0 0 1 0 0 0 0 1\n").unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 3, .. }));
        let e = read_poses("1 0 0 0 0 1 0 0 0 0 1 0\n2 0 0 0 0 1 0 0 0 0 1 0\n").unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 2, .. }));
        let e = read_poses("1 0 0 3 0 1 0 0 0 0 1 0\n").unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 1, .. }));
    }

    #[test]
    fn slightly_off_rotations_are_projected() {
        let t = read_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1.0001 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();
        assert!(t.poses()[1].rotation.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn identity_written_plainly() {
        assert_eq!(write_trajectory(&Trajectory::new()), "1 0 0 0 0 1 0 0 0 0 1 0\n");
    }

    #[test]
    fn trajectory_round_trip() {
        let mut t = Trajectory::new();
        for k in 0..100 {
            let w = Vector3::new(0.01 * k as f64, -0.3, 0.002);
            t.push_motion(&Pose::new(so3_exp(&w), Vector3::new(1e-7 * k as f64, 0.4, -1.3e3)));
        }
        let text = write_trajectory(&t);
        assert_eq!(text.lines().count(), 101);
        let back = read_poses(&text).unwrap();
        for (a, b) in t.poses().iter().zip(back.poses()) {
            assert!((a.to_matrix() - b.to_matrix()).amax() <= 1e-9);
        }
    }

    #[test]
    fn format_real_round_trips() {
        for v in [
            1.0,
            -0.0,
            1e-17,
            123456.789,
            -2.5e20,
            std::f64::consts::PI,
            1e-4,
            9.99e-5,
        ] {
            assert_eq!(format_real(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn tiny_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        fs::write(&p, bytes).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.data, vec![0, 64, 128, 255]);
    }

    #[test]
    fn pgm_with_comment_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        fs::write(&p, bytes).unwrap();
        assert_eq!(load_image(&p).unwrap().data, vec![1, 2, 3]);
    }

    #[test]
    fn missing_and_bad_images() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        let e = load_image(&missing).unwrap_err();
        assert!(e.to_string().contains("nope.png"));
        let junk = dir.path().join("junk.png");
        fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(load_image(&junk), Err(IoError::Image { .. })));
        let ascii = dir.path().join("ascii.pgm");
        fs::write(&ascii, b"P2 1 1 255\n7\n").unwrap();
        assert!(matches!(load_image(&ascii), Err(IoError::Image { .. })));
    }

    #[test]
    fn pgm_and_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(5, 3, (0..15).map(|v| v * 17).collect()).unwrap();
        let p = dir.path().join("r.pgm");
        save_pgm(&p, &img).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);

        let q = dir.path().join("r.png");
        image::GrayImage::from_raw(5, 3, img.data.clone())
            .unwrap()
            .save(&q)
            .unwrap();
        assert_eq!(load_image(&q).unwrap(), img);
    }

    #[test]
    fn colour_png_uses_luma() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("c.png");
        image::RgbImage::from_pixel(2, 1, image::Rgb([255, 255, 255]))
            .save(&q)
            .unwrap();
        assert_eq!(load_image(&q).unwrap().data, vec![255, 255]);
    }

    #[test]
    fn calibration_text_round_trip() {
        let rig = StereoRig::kitti_like();
        let c = parse_calibration(&format_calibration(&rig)).unwrap();
        assert_eq!((c.focal, c.cu, c.cv), (rig.focal, rig.cu, rig.cv));
        assert!((c.baseline - rig.baseline).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_csv_layout() {
        let row = FrameDiagnostics {
            frame: 1,
            matches: 10,
            fwd_inliers: Some(9),
            bwd_inliers: None,
            fwd_rms_px: Some(0.5),
            bwd_rms_px: None,
            fusion_degenerate: true,
            failed: false,
            frontend_ms: 1.0,
            estimate_ms: 2.0,
            total_ms: 3.0,
        };
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], DIAGNOSTICS_HEADER.join(","));
        assert_eq!(lines[1], "1,10,9,,0.5,,true,false,1.0,2.0,3.0");
        let mut empty = Vec::new();
        write_diagnostics_csv(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), DIAGNOSTICS_HEADER.join(","));
    }

    #[test]
    fn reliability_csv_layout() {
        let f = Trajectory::from_poses((0..5).map(|i| Pose::from_translation(0.0, 0.0, i as f64)).collect()).unwrap();
        let rep = reliability_report(&f, &f.inverted()).unwrap();
        let mut buf = Vec::new();
        write_reliability_csv(&mut buf, &rep, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "frame,rpe_trans_m,rpe_rot_rad,ape_trans_m,ape_rot_rad");
        assert_eq!(lines[1], "0,,,0,0");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("2,0,0,"));
    }
}
