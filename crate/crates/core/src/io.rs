//! Binary image/sinogram files and the on-disk dataset layout.
//!
//! `GDI1`: magic, `u32` rank, `u32` extents, `f32` row-major payload.
//! `GDS1`: the same header and payload followed by one `f64` angle per row.
//! All integers and floats are little endian.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phantom::{DatasetConfig, SampleTriplet};
use crate::tensor::Grid;
use crate::tomo::Sinogram;

pub const IMAGE_MAGIC: &[u8; 4] = b"GDI1";
pub const SINOGRAM_MAGIC: &[u8; 4] = b"GDS1";
pub const MANIFEST: &str = "manifest.txt";

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn encode_grid(magic: &[u8; 4], g: &Grid, out: &mut Vec<u8>) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(g.rank() as u32).to_le_bytes());
    for &d in g.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in g.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Parses a header and payload; returns the grid and the unread tail.
fn decode_grid<'a>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<(Grid, &'a [u8])> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return bad(format!("expected magic {}", String::from_utf8_lossy(magic)));
    }
    let word = |i: usize| -> Result<usize> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| Error::Format("truncated header".into()))
    };
    let rank = word(4)?;
    if rank == 0 || rank > 8 {
        return bad(format!("unsupported rank {rank}"));
    }
    let shape = (0..rank).map(|k| word(8 + 4 * k)).collect::<Result<Vec<_>>>()?;
    let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Format("extent overflow".into()))?;
    let start = 8 + 4 * rank;
    let end = n.checked_mul(4).and_then(|b| b.checked_add(start)).ok_or_else(|| Error::Format("extent overflow".into()))?;
    if bytes.len() < end {
        return bad("truncated payload");
    }
    let data = bytes[start..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let g = Grid::new(&shape, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((g, &bytes[end..]))
}

pub fn image_to_bytes(g: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * g.rank() + 4 * g.len());
    encode_grid(IMAGE_MAGIC, g, &mut out);
    out
}

pub fn image_from_bytes(bytes: &[u8]) -> Result<Grid> {
    let (g, rest) = decode_grid(IMAGE_MAGIC, bytes)?;
    if !rest.is_empty() {
        return bad("trailing bytes after image payload");
    }
    Ok(g)
}

pub fn sinogram_to_bytes(s: &Sinogram) -> Vec<u8> {
    let mut out = Vec::new();
    encode_grid(SINOGRAM_MAGIC, s.values(), &mut out);
    for a in s.angles() {
        out.extend_from_slice(&a.to_le_bytes());
    }
    out
}

pub fn sinogram_from_bytes(bytes: &[u8]) -> Result<Sinogram> {
    let (values, rest) = decode_grid(SINOGRAM_MAGIC, bytes)?;
    if values.rank() != 2 {
        return bad("sinogram payload must be rank 2");
    }
    let views = values.shape()[0];
    if rest.len() != 8 * views {
        return bad(format!("expected {views} angles, found {} bytes", rest.len()));
    }
    let angles = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Sinogram::new(values, angles).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_image(path: impl AsRef<Path>, g: &Grid) -> Result<()> {
    fs::write(path, image_to_bytes(g))?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Grid> {
    image_from_bytes(&fs::read(path)?)
}

pub fn write_sinogram(path: impl AsRef<Path>, s: &Sinogram) -> Result<()> {
    fs::write(path, sinogram_to_bytes(s))?;
    Ok(())
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    sinogram_from_bytes(&fs::read(path)?)
}

/// 8-bit binary PGM; values are clamped to `[0, 1]` and mapped linearly to `0..=255`.
pub fn pgm_bytes(image: &Grid) -> Result<Vec<u8>> {
    let (h, w) = image.dims2()?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

fn sample_path(root: &Path, id: usize, kind: &str) -> std::path::PathBuf {
    root.join(format!("{id}_{kind}.gdi"))
}

/// Writes `<id>_{full|teacher|student}.gdi` for every sample plus `manifest.txt`.
pub fn write_dataset(root: impl AsRef<Path>, cfg: &DatasetConfig, samples: &[SampleTriplet]) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let mut manifest = String::from("# id seed n_sparse multiplier\n");
    for s in samples {
        write_image(sample_path(root, s.id, "full"), &s.full)?;
        write_image(sample_path(root, s.id, "teacher"), &s.teacher_input)?;
        write_image(sample_path(root, s.id, "student"), &s.student_input)?;
        writeln!(manifest, "{} {} {} {}", s.id, cfg.seed, cfg.n_sparse, cfg.teacher_multiplier).expect("string write");
    }
    fs::write(root.join(MANIFEST), manifest)?;
    Ok(())
}

/// Manifest row of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: usize,
    pub seed: u64,
    pub n_sparse: usize,
    pub multiplier: usize,
}

pub fn read_manifest(root: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = root.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = (fields.len() == 4)
            .then(|| {
                Some(ManifestEntry {
                    id: fields[0].parse().ok()?,
                    seed: fields[1].parse().ok()?,
                    n_sparse: fields[2].parse().ok()?,
                    multiplier: fields[3].parse().ok()?,
                })
            })
            .flatten();
        match parsed {
            Some(e) => out.push(e),
            None => return bad(format!("{}:{}: malformed manifest line", path.display(), lineno + 1)),
        }
    }
    Ok(out)
}

/// Loads every sample listed in the manifest, in manifest order.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<Vec<SampleTriplet>> {
    let root = root.as_ref();
    read_manifest(root)?
        .into_iter()
        .map(|e| {
            Ok(SampleTriplet {
                id: e.id,
                full: read_image(sample_path(root, e.id, "full"))?,
                teacher_input: read_image(sample_path(root, e.id, "teacher"))?,
                student_input: read_image(sample_path(root, e.id, "student"))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_is_f32_exact() {
        let g = Grid::from_fn2(3, 5, |r, c| (r as f64 - c as f64) * 0.25);
        assert_eq!(image_from_bytes(&image_to_bytes(&g)).unwrap(), g);
    }

    #[test]
    fn sinogram_round_trip_keeps_f64_angles() {
        let s = Sinogram::new(Grid::from_fn2(2, 4, |r, c| (r * 4 + c) as f64), vec![0.1, 3.3]).unwrap();
        let back = sinogram_from_bytes(&sinogram_to_bytes(&s)).unwrap();
        assert_eq!(back.angles(), s.angles());
        assert_eq!(back.values(), s.values());
    }

    #[test]
    fn bad_magic_and_truncation() {
        let g = Grid::zeros(&[2, 2]);
        let mut bytes = image_to_bytes(&g);
        assert!(sinogram_from_bytes(&bytes).is_err());
        bytes.pop();
        assert!(image_from_bytes(&bytes).is_err());
        assert!(image_from_bytes(b"GDI").is_err());
    }

    #[test]
    fn pgm_header() {
        let g = Grid::from_fn2(2, 3, |_, c| c as f64 / 2.0);
        let bytes = pgm_bytes(&g).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[11..], &[0, 128, 255, 0, 128, 255]);
    }
}
