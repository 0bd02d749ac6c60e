//! File formats: "ROMD" sampled data, "ROMP" reduced models, velocity
//! models, and image outputs (CSV and 16-bit PGM with a sidecar describing
//! the normalization).
//!
//! All binary payloads are IEEE 754 binary64 little-endian, row-major. The
//! data file is deliberately self-contained: the reduction stage consumes
//! only this file and never sees grid fields, which keeps the reduced model
//! honest about being data driven.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::imaging::Image;
use crate::media::{BoundaryLabels, Edge, Grid2D, VelocityModel};
use crate::propagate::{Provenance, SampledData};
use crate::rom::{DiagonalConvention, ReducedModel};
use crate::{Error, Result};

const ROMD_MAGIC: &[u8; 4] = b"ROMD";
const ROMP_MAGIC: &[u8; 4] = b"ROMP";
const FORMAT_VERSION: u32 = 1;

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut vals = vec![0.0f64; rows * cols];
    for v in vals.iter_mut() {
        *v = read_f64(r)?;
    }
    // Stored row-major; DMatrix::from_row_slice matches.
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

fn provenance_tag(p: Provenance) -> (u8, f64, u64) {
    match p {
        Provenance::Clean => (0, 0.0, 0),
        Provenance::Noisy { epsilon, seed } => (1, epsilon, seed),
        Provenance::Regularized { mu } => (2, mu, 0),
    }
}

fn provenance_from_tag(tag: u8, x: f64, s: u64) -> Result<Provenance> {
    Ok(match tag {
        0 => Provenance::Clean,
        1 => Provenance::Noisy { epsilon: x, seed: s },
        2 => Provenance::Regularized { mu: x },
        t => return Err(Error::Format(format!("unknown provenance tag {t}"))),
    })
}

/// Write sampled data in the "ROMD" format: magic, version, provenance,
/// m, 2n, tau, then 2n row-major m x m matrices.
pub fn write_data(path: &Path, data: &SampledData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ROMD_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let (tag, x, s) = provenance_tag(data.provenance());
    w.write_all(&[tag])?;
    w.write_all(&x.to_le_bytes())?;
    w.write_all(&s.to_le_bytes())?;
    w.write_all(&(data.m() as u64).to_le_bytes())?;
    w.write_all(&(data.n2() as u64).to_le_bytes())?;
    w.write_all(&data.tau().to_le_bytes())?;
    for d in data.samples() {
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                w.write_all(&d[(i, j)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a "ROMD" file.
pub fn read_data(path: &Path) -> Result<SampledData> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ROMD_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported data version {version}")));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let x = read_f64(&mut r)?;
    let s = read_u64(&mut r)?;
    let provenance = provenance_from_tag(tag[0], x, s)?;
    let m = read_u64(&mut r)? as usize;
    let n2 = read_u64(&mut r)? as usize;
    let tau = read_f64(&mut r)?;
    if m == 0 || n2 == 0 || n2 % 2 != 0 {
        return Err(Error::Format(format!("bad dimensions m = {m}, 2n = {n2}")));
    }
    let mut samples = Vec::with_capacity(n2);
    for _ in 0..n2 {
        samples.push(read_matrix(&mut r, m, m)?);
    }
    SampledData::new(samples, tau, provenance)
}

/// CSV export of sampled data for inspection: one line per entry,
/// `k,i,j,value`.
pub fn write_data_csv(path: &Path, data: &SampledData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "k,i,j,value")?;
    for (k, d) in data.samples().iter().enumerate() {
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                writeln!(w, "{k},{i},{j},{:.17e}", d[(i, j)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn convention_tag(c: DiagonalConvention) -> u8 {
    match c {
        DiagonalConvention::SpdSqrt => 0,
        DiagonalConvention::Cholesky => 1,
        DiagonalConvention::Eig => 2,
    }
}

fn convention_from_tag(tag: u8) -> Result<DiagonalConvention> {
    Ok(match tag {
        0 => DiagonalConvention::SpdSqrt,
        1 => DiagonalConvention::Cholesky,
        2 => DiagonalConvention::Eig,
        t => return Err(Error::Format(format!("unknown convention tag {t}"))),
    })
}

/// Write a reduced model in the "ROMP" format: magic, version, m, n, mu,
/// convention, data hash, symmetry deviation, then `P~` (mn x mn) and `B~`
/// (mn x m).
pub fn write_model(path: &Path, rm: &ReducedModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ROMP_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(rm.m as u64).to_le_bytes())?;
    w.write_all(&(rm.n as u64).to_le_bytes())?;
    w.write_all(&rm.mu.to_le_bytes())?;
    w.write_all(&[convention_tag(rm.convention)])?;
    let hash_bytes = rm.data_hash.as_bytes();
    if hash_bytes.len() != 64 {
        return Err(Error::Format(format!(
            "data hash must be 64 hex chars, got {}",
            hash_bytes.len()
        )));
    }
    w.write_all(hash_bytes)?;
    w.write_all(&rm.sym_deviation.to_le_bytes())?;
    write_f64s(&mut w, rm.p.row_iter().flat_map(|r| r.iter().cloned().collect::<Vec<_>>()))?;
    write_f64s(&mut w, rm.b.row_iter().flat_map(|r| r.iter().cloned().collect::<Vec<_>>()))?;
    w.flush()?;
    Ok(())
}

/// Read a "ROMP" file.
pub fn read_model(path: &Path) -> Result<ReducedModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ROMP_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let m = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let mu = read_f64(&mut r)?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let convention = convention_from_tag(tag[0])?;
    let mut hash = [0u8; 64];
    r.read_exact(&mut hash)?;
    let data_hash = String::from_utf8(hash.to_vec())
        .map_err(|_| Error::Format("data hash is not valid UTF-8".into()))?;
    let sym_deviation = read_f64(&mut r)?;
    if m == 0 || n == 0 {
        return Err(Error::Format(format!("bad dimensions m = {m}, n = {n}")));
    }
    let p = read_matrix(&mut r, m * n, m * n)?;
    let b = read_matrix(&mut r, m * n, m)?;
    Ok(ReducedModel {
        p,
        b,
        m,
        n,
        convention,
        mu,
        data_hash,
        sym_deviation,
    })
}

/// Write a velocity model: text header then node values.
///
/// Header lines are `key value` pairs: `nx`, `ny`, `h`, `origin x y`,
/// `unit m|km`, `accessible <edges>`, `format csv|binary`. A line with
/// `---` ends the header. CSV payload has `ny` comma-separated rows bottom
/// row first (row-major in node index order); binary payload is raw
/// binary64 little-endian in the same order. Values are written in the
/// declared unit.
pub fn write_velocity_model(path: &Path, model: &VelocityModel, binary: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = &model.grid;
    writeln!(w, "nx {}", g.nx)?;
    writeln!(w, "ny {}", g.ny)?;
    writeln!(w, "h {:.17e}", g.h)?;
    writeln!(w, "origin {:.17e} {:.17e}", g.origin.0, g.origin.1)?;
    writeln!(w, "unit m")?;
    let edges: Vec<&str> = Edge::ALL
        .iter()
        .filter(|e| model.boundary.is_accessible(**e))
        .map(|e| match e {
            Edge::Top => "top",
            Edge::Bottom => "bottom",
            Edge::Left => "left",
            Edge::Right => "right",
        })
        .collect();
    writeln!(w, "accessible {}", edges.join(" "))?;
    writeln!(w, "format {}", if binary { "binary" } else { "csv" })?;
    writeln!(w, "---")?;
    if binary {
        write_f64s(&mut w, model.c.iter().cloned())?;
    } else {
        for iy in 0..g.ny {
            let row: Vec<String> = (0..g.nx)
                .map(|ix| format!("{:.17e}", model.c[g.idx(ix, iy)]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a velocity model file; `km` units are converted to meters on load
/// (lengths scaled by 1000, velocities by 1000 as km/s to m/s).
pub fn read_velocity_model(path: &Path) -> Result<VelocityModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut nx = None;
    let mut ny = None;
    let mut h = None;
    let mut origin = (0.0f64, 0.0f64);
    let mut unit_scale = 1.0f64;
    let mut edges: Vec<Edge> = vec![Edge::Top];
    let mut binary = false;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("missing --- header terminator".into()));
        }
        let line = line.trim();
        if line == "---" {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        let one = |rest: &[&str]| -> Result<String> {
            rest.first()
                .map(|s| s.to_string())
                .ok_or_else(|| Error::Format(format!("missing value for {key}")))
        };
        match key {
            "nx" => nx = Some(one(&rest)?.parse::<usize>().map_err(|e| Error::Format(e.to_string()))?),
            "ny" => ny = Some(one(&rest)?.parse::<usize>().map_err(|e| Error::Format(e.to_string()))?),
            "h" => h = Some(one(&rest)?.parse::<f64>().map_err(|e| Error::Format(e.to_string()))?),
            "origin" => {
                if rest.len() != 2 {
                    return Err(Error::Format("origin needs two values".into()));
                }
                origin = (
                    rest[0].parse().map_err(|e: std::num::ParseFloatError| Error::Format(e.to_string()))?,
                    rest[1].parse().map_err(|e: std::num::ParseFloatError| Error::Format(e.to_string()))?,
                );
            }
            "unit" => {
                unit_scale = match one(&rest)?.as_str() {
                    "m" => 1.0,
                    "km" => 1000.0,
                    u => return Err(Error::Format(format!("unknown unit {u}"))),
                }
            }
            "accessible" => {
                edges = rest
                    .iter()
                    .map(|s| match *s {
                        "top" => Ok(Edge::Top),
                        "bottom" => Ok(Edge::Bottom),
                        "left" => Ok(Edge::Left),
                        "right" => Ok(Edge::Right),
                        e => Err(Error::Format(format!("unknown edge {e}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
            "format" => {
                binary = match one(&rest)?.as_str() {
                    "csv" => false,
                    "binary" => true,
                    f => return Err(Error::Format(format!("unknown format {f}"))),
                }
            }
            k => return Err(Error::Format(format!("unknown header key {k}"))),
        }
    }
    let nx = nx.ok_or_else(|| Error::Format("missing nx".into()))?;
    let ny = ny.ok_or_else(|| Error::Format("missing ny".into()))?;
    let h = h.ok_or_else(|| Error::Format("missing h".into()))?;
    let grid = Grid2D::new(nx, ny, h * unit_scale, (origin.0 * unit_scale, origin.1 * unit_scale))?;
    let mut c = Vec::with_capacity(grid.n_nodes());
    if binary {
        for _ in 0..grid.n_nodes() {
            c.push(read_f64(&mut r)? * unit_scale);
        }
    } else {
        for iy in 0..ny {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format(format!("missing data row {iy}")));
            }
            let row: Vec<f64> = line
                .trim()
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != nx {
                return Err(Error::Format(format!(
                    "row {iy} has {} values, expected {nx}",
                    row.len()
                )));
            }
            c.extend(row.iter().map(|v| v * unit_scale));
        }
    }
    VelocityModel::new(grid, c, BoundaryLabels::new(&edges))
}

/// Write a scalar grid field as CSV: comment header, then `ny` rows of `nx`
/// comma-separated values.
pub fn write_field_csv(path: &Path, grid: &Grid2D, values: &[f64]) -> Result<()> {
    if values.len() != grid.n_nodes() {
        return Err(Error::Mismatch(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.n_nodes()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# nx {} ny {} h {:.17e}", grid.nx, grid.ny, grid.h)?;
    for iy in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx)
            .map(|ix| format!("{:.17e}", values[grid.idx(ix, iy)]))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a scalar grid field written by [`write_field_csv`].
pub fn read_field_csv(path: &Path) -> Result<(Grid2D, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.trim().split_whitespace().collect();
    // "# nx <v> ny <v> h <v>"
    if parts.len() != 7 || parts[0] != "#" || parts[1] != "nx" || parts[3] != "ny" || parts[5] != "h"
    {
        return Err(Error::Format(format!("bad field header: {header}")));
    }
    let nx: usize = parts[2].parse().map_err(|e: std::num::ParseIntError| Error::Format(e.to_string()))?;
    let ny: usize = parts[4].parse().map_err(|e: std::num::ParseIntError| Error::Format(e.to_string()))?;
    let h: f64 = parts[6].parse().map_err(|e: std::num::ParseFloatError| Error::Format(e.to_string()))?;
    let grid = Grid2D::new(nx, ny, h, (0.0, 0.0))?;
    let mut values = Vec::with_capacity(grid.n_nodes());
    for iy in 0..ny {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format(format!("missing data row {iy}")));
        }
        let row: Vec<f64> = line
            .trim()
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != nx {
            return Err(Error::Format(format!(
                "row {iy} has {} values, expected {nx}",
                row.len()
            )));
        }
        values.extend(row);
    }
    Ok((grid, values))
}

/// Write an image as CSV (same layout as [`write_field_csv`]).
pub fn write_image_csv(path: &Path, img: &Image) -> Result<()> {
    write_field_csv(path, &img.grid, &img.values)
}

/// Write a 16-bit binary PGM (min-max normalized) plus a `.sidecar.txt`
/// recording the affine map `value = vmin + gray / 65535 * (vmax - vmin)`.
pub fn write_field_pgm(path: &Path, grid: &Grid2D, values: &[f64]) -> Result<()> {
    if values.len() != grid.n_nodes() {
        return Err(Error::Mismatch(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.n_nodes()
        )));
    }
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = vmax - vmin;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5")?;
    writeln!(w, "{} {}", grid.nx, grid.ny)?;
    writeln!(w, "65535")?;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = values[grid.idx(ix, iy)];
            let gray = if span > 0.0 {
                ((v - vmin) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            // PGM multi-byte samples are big-endian.
            w.write_all(&gray.to_be_bytes())?;
        }
    }
    w.flush()?;

    let sidecar = path.with_extension("sidecar.txt");
    let mut s = BufWriter::new(File::create(sidecar)?);
    writeln!(s, "format pgm16")?;
    writeln!(s, "nx {}", grid.nx)?;
    writeln!(s, "ny {}", grid.ny)?;
    writeln!(s, "vmin {:.17e}", vmin)?;
    writeln!(s, "vmax {:.17e}", vmax)?;
    writeln!(s, "map value = vmin + gray / 65535 * (vmax - vmin)")?;
    s.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{TransducerArray, WaveletSpec};
    use crate::propagate::simulate_data;
    use crate::rom::reduce;
    use approx::assert_abs_diff_eq;
    use tempfile::tempdir;

    fn sample_model() -> VelocityModel {
        let grid = Grid2D::new(10, 8, 2.0, (1.0, -3.0)).unwrap();
        let c: Vec<f64> = (0..grid.n_nodes()).map(|i| 1500.0 + i as f64).collect();
        VelocityModel::new(grid, c, BoundaryLabels::new(&[Edge::Top, Edge::Left])).unwrap()
    }

    fn sample_data() -> SampledData {
        let model = sample_model();
        let scaled = VelocityModel::new(
            Grid2D::new(10, 8, 1.0, (0.0, 0.0)).unwrap(),
            model.c.iter().map(|c| c / 1500.0).collect(),
            BoundaryLabels::top_accessible(),
        )
        .unwrap();
        let array = TransducerArray::uniform_on_edge(&scaled, Edge::Top, 3, 2).unwrap();
        let w = WaveletSpec::new(0.1, 0.6, 8).unwrap();
        simulate_data(&scaled, &array, &w, None).unwrap()
    }

    #[test]
    fn data_roundtrip_is_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.romd");
        let data = sample_data().with_provenance(Provenance::Noisy {
            epsilon: 0.1,
            seed: 42,
        });
        write_data(&path, &data).unwrap();
        let back = read_data(&path).unwrap();
        assert_eq!(back.m(), data.m());
        assert_eq!(back.n2(), data.n2());
        assert_eq!(back.tau(), data.tau());
        assert_eq!(back.provenance(), data.provenance());
        for k in 0..data.n2() {
            assert_eq!(back.sample(k), data.sample(k));
        }
    }

    #[test]
    fn data_rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bogus.romd");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        match read_data(&path) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got ok = {}", other.is_ok()),
        }
    }

    #[test]
    fn model_roundtrip_is_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.romp");
        let rm = reduce(&sample_data()).unwrap();
        write_model(&path, &rm).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.m, rm.m);
        assert_eq!(back.n, rm.n);
        assert_eq!(back.mu, rm.mu);
        assert_eq!(back.convention, rm.convention);
        assert_eq!(back.data_hash, rm.data_hash);
        assert_eq!(back.p, rm.p);
        assert_eq!(back.b, rm.b);
    }

    #[test]
    fn velocity_model_roundtrip_csv_and_binary() {
        let dir = tempdir().unwrap();
        let model = sample_model();
        for (name, binary) in [("m.csv", false), ("m.bin", true)] {
            let path = dir.path().join(name);
            write_velocity_model(&path, &model, binary).unwrap();
            let back = read_velocity_model(&path).unwrap();
            assert_eq!(back.grid.nx, model.grid.nx);
            assert_eq!(back.grid.ny, model.grid.ny);
            assert_eq!(back.grid.h, model.grid.h);
            assert_eq!(back.grid.origin, model.grid.origin);
            assert_eq!(back.boundary, model.boundary);
            if binary {
                assert_eq!(back.c, model.c);
            } else {
                for (a, b) in back.c.iter().zip(&model.c) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn km_units_convert_on_load() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("km.model");
        let text = "nx 3\nny 3\nh 0.01\norigin 0 0\nunit km\naccessible top\nformat csv\n---\n1.5,1.6,1.7\n1.8,1.9,2.0\n2.1,2.2,2.3\n";
        std::fs::write(&path, text).unwrap();
        let model = read_velocity_model(&path).unwrap();
        assert_abs_diff_eq!(model.grid.h, 10.0);
        assert_abs_diff_eq!(model.c[0], 1500.0);
        assert_abs_diff_eq!(model.c[8], 2300.0);
    }

    #[test]
    fn field_csv_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let grid = Grid2D::new(7, 5, 0.5, (0.0, 0.0)).unwrap();
        let values: Vec<f64> = (0..grid.n_nodes()).map(|i| (i as f64).sin()).collect();
        write_field_csv(&path, &grid, &values).unwrap();
        let (g2, v2) = read_field_csv(&path).unwrap();
        assert_eq!(g2.nx, 7);
        assert_eq!(g2.ny, 5);
        for (a, b) in v2.iter().zip(&values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn pgm_has_header_payload_and_sidecar() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let grid = Grid2D::new(4, 3, 1.0, (0.0, 0.0)).unwrap();
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        write_field_pgm(&path, &grid, &values).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_end = bytes
            .windows(6)
            .position(|w| w == b"65535\n")
            .unwrap()
            + 6;
        assert!(bytes.starts_with(b"P5\n4 3\n"));
        assert_eq!(bytes.len() - header_end, 12 * 2);
        // Min maps to 0, max to 65535.
        assert_eq!(&bytes[header_end..header_end + 2], &[0, 0]);
        assert_eq!(&bytes[bytes.len() - 2..], &65535u16.to_be_bytes());
        let sidecar = std::fs::read_to_string(path.with_extension("sidecar.txt")).unwrap();
        assert!(sidecar.contains("vmin 0"));
        assert!(sidecar.contains("vmax 1.1"));
    }
}
