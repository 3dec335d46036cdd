//! File formats: QDIFFCF1 binary fields, CSV tables, PGM rasters and
//! decomposition directories.
//!
//! QDIFFCF1 layout: the ASCII magic `QDIFFCF1`, little-endian `u32` N and
//! `u32` tag (0 real, 1 momentum, 2 real image), then N×N row-major
//! little-endian `f64` pairs `(re, im)`. Real images store `(v, 0)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Space, TransverseGrid};
use crate::imaging::RealImage;
use crate::matter::{CouplingKind, CouplingMatrix};
use crate::modes::{ModeFamily, ModeSpec};
use crate::schmidt::{AxisModes, BasisManifest, ModeStorage, SchmidtDecomposition};

pub const MAGIC: &[u8; 8] = b"QDIFFCF1";
pub const REAL_IMAGE_TAG: u32 = 2;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a raw QDIFFCF1 record.
pub fn write_qdiff(path: &Path, samples: usize, tag: u32, values: &[Complex64]) -> Result<()> {
    if values.len() != samples * samples {
        return Err(Error::InvalidParameter(format!(
            "{} values for a {samples}x{samples} record",
            values.len()
        )));
    }
    let mut bytes = Vec::with_capacity(16 + 16 * values.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(samples as u32).to_le_bytes());
    bytes.extend_from_slice(&tag.to_le_bytes());
    for z in values {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

/// Reads a raw QDIFFCF1 record as `(N, tag, values)`.
pub fn read_qdiff(path: &Path) -> Result<(usize, u32, Vec<Complex64>)> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "missing QDIFFCF1 header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let n = word(8) as usize;
    let tag = word(12);
    let expected = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(16))
        .and_then(|c| c.checked_add(16))
        .ok_or_else(|| Error::format(path, "sample count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes for N={n}, found {}", bytes.len()),
        ));
    }
    let values = bytes[16..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((n, tag, values))
}

pub fn write_field(path: &Path, field: &ComplexField) -> Result<()> {
    write_qdiff(path, field.grid().samples_per_axis(), field.space().tag(), field.values())
}

/// Reads a field and attaches it to `grid`, which must have the stored N.
pub fn read_field(path: &Path, grid: &TransverseGrid) -> Result<ComplexField> {
    let (n, tag, values) = read_qdiff(path)?;
    let space = Space::from_tag(tag)
        .ok_or_else(|| Error::format(path, format!("tag {tag} is not a field space")))?;
    if n != grid.samples_per_axis() {
        return Err(Error::format(
            path,
            format!("stored N={n}, grid has N={}", grid.samples_per_axis()),
        ));
    }
    ComplexField::new(*grid, space, values)
}

pub fn write_real_image(path: &Path, image: &RealImage) -> Result<()> {
    let values: Vec<Complex64> = image.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
    write_qdiff(path, image.grid().samples_per_axis(), REAL_IMAGE_TAG, &values)
}

/// Reads a real image. The grid only supplies the half extent; N comes
/// from the file and must match.
pub fn read_real_image(path: &Path, grid: &TransverseGrid) -> Result<RealImage> {
    let (n, tag, values) = read_qdiff(path)?;
    if tag != REAL_IMAGE_TAG {
        return Err(Error::format(path, format!("tag {tag} is not a real image")));
    }
    if n != grid.samples_per_axis() {
        return Err(Error::format(
            path,
            format!("stored N={n}, grid has N={}", grid.samples_per_axis()),
        ));
    }
    RealImage::new(*grid, values.iter().map(|z| z.re).collect())
}

/// Reads only the pixel values of a real-image record, with its N.
pub fn read_real_values(path: &Path) -> Result<(usize, Vec<f64>)> {
    let (n, tag, values) = read_qdiff(path)?;
    if tag != REAL_IMAGE_TAG {
        return Err(Error::format(path, format!("tag {tag} is not a real image")));
    }
    Ok((n, values.iter().map(|z| z.re).collect()))
}

/// Schmidt spectrum as `index,lambda`.
pub fn write_spectrum_csv(path: &Path, weights: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["index", "lambda"]).map_err(to_err)?;
    for (k, l) in weights.iter().enumerate() {
        w.write_record([k.to_string(), l.to_string()]).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_spectrum_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        out.push(parse_f64(path, rec.get(1))?);
    }
    Ok(out)
}

fn parse_f64(path: &Path, s: Option<&str>) -> Result<f64> {
    s.and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::format(path, format!("expected a number, found {s:?}")))
}

fn parse_usize(path: &Path, s: Option<&str>) -> Result<usize> {
    s.and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::format(path, format!("expected an index, found {s:?}")))
}

/// `# key=value` lines at the top of a file.
fn read_metadata(path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        if let Some((k, v)) = rest.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

fn metadata<'a>(path: &Path, meta: &'a [(String, String)], key: &str) -> Result<&'a str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::format(path, format!("missing metadata '{key}'")))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(path)?))
}

/// Square complex matrix as `n,m,re,im` rows after `# basis=` and
/// `# labels=` lines naming the mode ordering.
pub fn write_matrix_csv(path: &Path, matrix: &DMatrix<Complex64>, basis: &BasisManifest, kind: &str) -> Result<()> {
    let mut out = create(path)?;
    let header = format!(
        "# kind={kind}\n# basis={}\n# labels={}\n",
        basis.id,
        basis.labels.join(" ")
    );
    out.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["n", "m", "re", "im"]).map_err(to_err)?;
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            let z = matrix[(i, j)];
            w.write_record([i.to_string(), j.to_string(), z.re.to_string(), z.im.to_string()])
                .map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a matrix CSV as `(entries, basis, kind)`.
pub fn read_matrix_csv(path: &Path) -> Result<(DMatrix<Complex64>, BasisManifest, String)> {
    let meta = read_metadata(path)?;
    let kind = metadata(path, &meta, "kind")?.to_string();
    let basis = BasisManifest {
        id: metadata(path, &meta, "basis")?.to_string(),
        labels: metadata(path, &meta, "labels")?
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect(),
    };
    let dim = basis.labels.len();
    let mut m = DMatrix::zeros(dim, dim);
    let mut seen = 0;
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let (i, j) = (parse_usize(path, rec.get(0))?, parse_usize(path, rec.get(1))?);
        if i >= dim || j >= dim {
            return Err(Error::format(path, format!("entry ({i},{j}) outside a {dim}x{dim} matrix")));
        }
        m[(i, j)] = Complex64::new(parse_f64(path, rec.get(2))?, parse_f64(path, rec.get(3))?);
        seen += 1;
    }
    if seen != dim * dim {
        return Err(Error::format(path, format!("{seen} entries for a {dim}x{dim} matrix")));
    }
    Ok((m, basis, kind))
}

pub fn write_coupling_csv(path: &Path, c: &CouplingMatrix) -> Result<()> {
    write_matrix_csv(path, c.entries(), c.basis(), c.kind().name())
}

pub fn read_coupling_csv(path: &Path) -> Result<CouplingMatrix> {
    let (m, basis, kind) = read_matrix_csv(path)?;
    let kind = CouplingKind::parse(&kind)
        .ok_or_else(|| Error::format(path, format!("unknown coupling kind '{kind}'")))?;
    CouplingMatrix::new(m, basis, kind)
}

/// A grayscale raster with its declared maximum gray level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u32,
    pub pixels: Vec<u32>,
}

/// Reads an 8- or 16-bit P2/P5 graymap, keeping the original gray levels.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bad = |e: image::ImageError| Error::format(path, e.to_string());
    let decoder = PnmDecoder::new(open(path)?).map_err(bad)?;
    let header = decoder.header();
    if !matches!(header.subtype(), PnmSubtype::Graymap(_)) {
        return Err(Error::format(path, "not a P2/P5 graymap"));
    }
    let max_value = header.maximal_sample();
    let (width, height) = (header.width() as usize, header.height() as usize);
    let mut buf = vec![0u8; decoder.total_bytes() as usize];
    let wide = decoder.color_type() == image::ColorType::L16;
    decoder.read_image(&mut buf).map_err(bad)?;
    // The decoder stretches samples to the full 8/16-bit range; undo that.
    let (target, raw): (f64, Vec<u32>) = if wide {
        (
            65535.0,
            buf.chunks_exact(2).map(|c| u16::from_ne_bytes([c[0], c[1]]) as u32).collect(),
        )
    } else {
        (255.0, buf.iter().map(|v| *v as u32).collect())
    };
    let pixels = raw
        .into_iter()
        .map(|v| (v as f64 * max_value as f64 / target).round() as u32)
        .collect();
    Ok(GrayImage {
        width,
        height,
        max_value,
        pixels,
    })
}

/// Writes a binary (P5) graymap; samples above `max_value` are clamped.
pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    if image.pixels.len() != image.width * image.height {
        return Err(Error::InvalidParameter("pixel count does not match dimensions".into()));
    }
    if image.max_value == 0 || image.max_value > 65535 {
        return Err(Error::InvalidParameter(format!("unsupported PGM maximum {}", image.max_value)));
    }
    let (wd, ht) = (image.width as u32, image.height as u32);
    let header = GraymapHeader {
        encoding: SampleEncoding::Binary,
        width: wd,
        height: ht,
        maxwhite: image.max_value,
    };
    let mut w = create(path)?;
    let mut enc = PnmEncoder::new(&mut w).with_header(header.into());
    let bad = |e: image::ImageError| Error::format(path, e.to_string());
    let clamped = image.pixels.iter().map(|v| (*v).min(image.max_value));
    if image.max_value <= 255 {
        let data: Vec<u8> = clamped.map(|v| v as u8).collect();
        enc.encode(&data[..], wd, ht, ExtendedColorType::L8).map_err(bad)?;
    } else {
        let data: Vec<u16> = clamped.map(|v| v as u16).collect();
        enc.encode(&data[..], wd, ht, ExtendedColorType::L16).map_err(bad)?;
    }
    drop(enc);
    finish(path, w)
}

/// Min-max normalization to 8 bits; a constant input maps to zero.
fn to_gray8(values: &[f64]) -> (Vec<u32>, f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let pixels = values
        .iter()
        .map(|v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u32 } else { 0 })
        .collect();
    (pixels, lo, hi)
}

pub fn range_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".range");
    PathBuf::from(s)
}

/// 8-bit PGM of a real image (grid row `iy` is raster row `iy`) plus a
/// `<path>.range` sidecar with the normalization bounds.
pub fn write_image_pgm(path: &Path, image: &RealImage) -> Result<PathBuf> {
    let n = image.grid().samples_per_axis();
    let (pixels, lo, hi) = to_gray8(image.values());
    write_pgm(
        path,
        &GrayImage {
            width: n,
            height: n,
            max_value: 255,
            pixels,
        },
    )?;
    let side = range_sidecar(path);
    let mut w = create(&side)?;
    write!(w, "min={lo}\nmax={hi}\n").map_err(|e| Error::io(&side, e))?;
    finish(&side, w)?;
    Ok(side)
}

/// 8-bit PGM of `|f|`, min-max normalized.
pub fn write_magnitude_pgm(path: &Path, field: &ComplexField) -> Result<()> {
    let n = field.grid().samples_per_axis();
    let mags: Vec<f64> = field.values().iter().map(|z| z.norm()).collect();
    let (pixels, _, _) = to_gray8(&mags);
    write_pgm(
        path,
        &GrayImage {
            width: n,
            height: n,
            max_value: 255,
            pixels,
        },
    )
}

/// 8-bit PGM of `|M_ij|` with row `i` as raster row `i`.
pub fn write_heatmap_pgm(path: &Path, matrix: &DMatrix<Complex64>) -> Result<()> {
    let mut mags = Vec::with_capacity(matrix.len());
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            mags.push(matrix[(i, j)].norm());
        }
    }
    let (pixels, _, _) = to_gray8(&mags);
    write_pgm(
        path,
        &GrayImage {
            width: matrix.ncols(),
            height: matrix.nrows(),
            max_value: 255,
            pixels,
        },
    )
}

const DECOMPOSITION_CSV: &str = "decomposition.csv";
const AXIS_WEIGHTS_CSV: &str = "axis_weights.csv";
const AXIS_FILES: [&str; 4] = [
    "axis_x_signal.bin",
    "axis_x_idler.bin",
    "axis_y_signal.bin",
    "axis_y_idler.bin",
];

fn mode_file(kind: &str, n: usize) -> String {
    format!("{kind}_{n:04}.bin")
}

/// Persists a decomposition into `dir` and returns the files written.
/// Momentum-space modes are stored; real-space ones are recomputed on load.
pub fn save_decomposition(dir: &Path, dec: &SchmidtDecomposition) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = dec.grid();
    let n = grid.samples_per_axis();
    let mut written = Vec::new();
    let storage = match dec.storage() {
        ModeStorage::Dense { .. } => "dense",
        ModeStorage::Separable { .. } => "separable",
        ModeStorage::Analytic { .. } => "analytic",
    };
    let csv_path = dir.join(DECOMPOSITION_CSV);
    let mut out = create(&csv_path)?;
    let header = format!(
        "# storage={storage}\n# source={}\n# samples={n}\n# half_extent={}\n# tail_mass={}\n# regime_sign={}\n",
        dec.source(),
        grid.half_extent(),
        dec.tail_mass(),
        dec.regime_sign()
    );
    out.write_all(header.as_bytes()).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::format(&csv_path, e.to_string());
    w.write_record(["index", "lambda", "label", "family", "a", "b", "waist", "idler_sign"])
        .map_err(to_err)?;
    let labels = dec.labels();
    for k in 0..dec.rank() {
        let lam = dec.weights()[k].to_string();
        let row: Vec<String> = match dec.storage() {
            ModeStorage::Dense { .. } => vec![String::new(); 5],
            ModeStorage::Separable { pairs, .. } => vec![
                String::new(),
                pairs[k].0.to_string(),
                pairs[k].1.to_string(),
                String::new(),
                String::new(),
            ],
            ModeStorage::Analytic { specs, idler_signs } => vec![
                specs[k].family.name().to_string(),
                specs[k].index_a.to_string(),
                specs[k].index_b.to_string(),
                specs[k].waist.to_string(),
                idler_signs[k].to_string(),
            ],
        };
        let mut rec = vec![k.to_string(), lam, labels[k].clone()];
        rec.extend(row);
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    drop(w);
    written.push(csv_path.clone());

    match dec.storage() {
        ModeStorage::Dense { signal_q, idler_q, .. } => {
            for (k, (s, i)) in signal_q.iter().zip(idler_q).enumerate() {
                for (kind, f) in [("signal", s), ("idler", i)] {
                    let p = dir.join(mode_file(kind, k));
                    write_field(&p, f)?;
                    written.push(p);
                }
            }
        }
        ModeStorage::Separable { x, y, .. } => {
            let rows = |v: &Vec<Vec<Complex64>>| -> Vec<Complex64> {
                let mut flat = vec![Complex64::new(0.0, 0.0); n * n];
                for (k, row) in v.iter().enumerate().take(n) {
                    flat[k * n..(k + 1) * n].copy_from_slice(row);
                }
                flat
            };
            let sets = [&x.signal_q, &x.idler_q, &y.signal_q, &y.idler_q];
            for (name, set) in AXIS_FILES.iter().zip(sets) {
                let p = dir.join(name);
                write_qdiff(&p, n, Space::Momentum.tag(), &rows(set))?;
                written.push(p);
            }
            let p = dir.join(AXIS_WEIGHTS_CSV);
            let mut w = csv::Writer::from_writer(create(&p)?);
            let to_err = |e: csv::Error| Error::format(&p, e.to_string());
            w.write_record(["axis", "index", "lambda"]).map_err(to_err)?;
            for (axis, modes) in [("x", x), ("y", y)] {
                for (k, l) in modes.weights.iter().enumerate() {
                    w.write_record([axis.to_string(), k.to_string(), l.to_string()])
                        .map_err(to_err)?;
                }
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        ModeStorage::Analytic { .. } => {}
    }
    Ok(written)
}

/// Loads a directory written by [`save_decomposition`].
pub fn load_decomposition(dir: &Path) -> Result<SchmidtDecomposition> {
    let csv_path = dir.join(DECOMPOSITION_CSV);
    if !csv_path.exists() {
        return Err(Error::io(
            &csv_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no decomposition in this directory"),
        ));
    }
    let meta = read_metadata(&csv_path)?;
    let get = |k: &str| metadata(&csv_path, &meta, k);
    let num = |k: &str| -> Result<f64> { parse_f64(&csv_path, Some(get(k)?)) };
    let n = parse_usize(&csv_path, Some(get("samples")?))?;
    let grid = TransverseGrid::new(n, num("half_extent")?)?;
    let regime_sign = num("regime_sign")? as i8;
    let mut weights = Vec::new();
    let mut rows = Vec::new();
    for rec in csv_reader(&csv_path)?.records() {
        let rec = rec.map_err(|e| Error::format(&csv_path, e.to_string()))?;
        weights.push(parse_f64(&csv_path, rec.get(1))?);
        rows.push(rec);
    }
    let storage = match get("storage")? {
        "dense" => {
            let read = |kind: &str| {
                (0..rows.len())
                    .map(|k| {
                        let f = read_field(&dir.join(mode_file(kind, k)), &grid)?;
                        if f.space() != Space::Momentum {
                            return Err(Error::format(dir.join(mode_file(kind, k)), "expected a momentum field"));
                        }
                        Ok(f)
                    })
                    .collect::<Result<Vec<_>>>()
            };
            let signal_q = read("signal")?;
            let idler_q = read("idler")?;
            let to_real = |fs: &[ComplexField]| fs.iter().map(|f| f.to_real()).collect::<Result<Vec<_>>>();
            ModeStorage::Dense {
                signal_r: to_real(&signal_q)?,
                idler_r: to_real(&idler_q)?,
                signal_q,
                idler_q,
            }
        }
        "separable" => {
            let wpath = dir.join(AXIS_WEIGHTS_CSV);
            let mut wx = Vec::new();
            let mut wy = Vec::new();
            for rec in csv_reader(&wpath)?.records() {
                let rec = rec.map_err(|e| Error::format(&wpath, e.to_string()))?;
                let l = parse_f64(&wpath, rec.get(2))?;
                match rec.get(0) {
                    Some("x") => wx.push(l),
                    Some("y") => wy.push(l),
                    other => return Err(Error::format(&wpath, format!("unknown axis {other:?}"))),
                }
            }
            let mut sets = Vec::new();
            for name in AXIS_FILES {
                let p = dir.join(name);
                let (m, _, values) = read_qdiff(&p)?;
                if m != n {
                    return Err(Error::format(&p, format!("stored N={m}, expected {n}")));
                }
                let count = if name.starts_with("axis_x") { wx.len() } else { wy.len() };
                sets.push(values.chunks(n).take(count).map(|c| c.to_vec()).collect::<Vec<_>>());
            }
            let mut it = sets.into_iter();
            let mut next = || it.next().unwrap();
            let x = AxisModes::from_momentum(&grid, wx, next(), next());
            let y = AxisModes::from_momentum(&grid, wy, next(), next());
            let pairs = rows
                .iter()
                .map(|r| Ok((parse_usize(&csv_path, r.get(4))?, parse_usize(&csv_path, r.get(5))?)))
                .collect::<Result<Vec<_>>>()?;
            ModeStorage::Separable { x, y, pairs }
        }
        "analytic" => {
            let mut specs = Vec::new();
            let mut idler_signs = Vec::new();
            for r in &rows {
                let family: ModeFamily = r
                    .get(3)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::format(&csv_path, "unknown mode family"))?;
                let a = parse_usize(&csv_path, r.get(4))? as u32;
                let b: i32 = r
                    .get(5)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(&csv_path, "bad mode index"))?;
                specs.push(ModeSpec::new(family, a, b, parse_f64(&csv_path, r.get(6))?)?);
                idler_signs.push(parse_f64(&csv_path, r.get(7))?);
            }
            ModeStorage::Analytic { specs, idler_signs }
        }
        other => return Err(Error::format(&csv_path, format!("unknown storage '{other}'"))),
    };
    SchmidtDecomposition::from_parts(
        grid,
        get("source")?.to_string(),
        weights,
        num("tail_mass")?,
        regime_sign,
        storage,
    )
}
