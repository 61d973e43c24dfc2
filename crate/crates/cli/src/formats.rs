//! On-disk field snapshots.
//!
//! The native format is binary: the magic bytes "LLGF", a version byte,
//! then the axis count, the per-axis resolution, and the sample time as
//! little-endian 64-bit values, followed by the row-major
//! component-interleaved samples as little-endian f64. The component count
//! is whatever evenly divides the payload.
//!
//! A legacy VTK STRUCTURED_POINTS ASCII writer is included for external
//! visualization tools; nothing here reads it back.

use std::io::{self, Read, Write};

use micromag::grid::{Boundary, BoxDomain, VectorField};

const MAGIC: &[u8; 4] = b"LLGF";
const VERSION: u8 = 1;

pub struct Snapshot {
    pub resolution: Vec<usize>,
    pub time: f64,
    pub ncomp: usize,
    /// Row-major, component-interleaved samples.
    pub data: Vec<f64>,
}

pub fn write_snapshot(w: &mut impl Write, field: &VectorField, time: f64) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let res = field.domain().resolution();
    w.write_all(&(res.len() as u64).to_le_bytes())?;
    for &n in res {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&time.to_le_bytes())?;
    for &v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(r: &mut impl Read) -> io::Result<Snapshot> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a field snapshot (bad magic)"));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(bad("unsupported snapshot version"));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let dims = u64::from_le_bytes(u64buf) as usize;
    if dims == 0 || dims > 8 {
        return Err(bad("implausible axis count"));
    }
    let mut resolution = Vec::with_capacity(dims);
    let mut points = 1usize;
    for _ in 0..dims {
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        points = points
            .checked_mul(n)
            .filter(|&p| p > 0 && p < 1 << 40)
            .ok_or_else(|| bad("implausible resolution"))?;
        resolution.push(n);
    }
    r.read_exact(&mut u64buf)?;
    let time = f64::from_le_bytes(u64buf);

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 samples"));
    }
    let samples = payload.len() / 8;
    if samples % points != 0 || samples == 0 {
        return Err(bad("payload does not cover the grid evenly"));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Snapshot { resolution, time, ncomp: samples / points, data })
}

impl Snapshot {
    /// Rebuilds the grid field, given the domain metadata the snapshot
    /// itself does not carry.
    pub fn into_field(self, lengths: &[f64], boundary: Boundary) -> micromag::Result<VectorField> {
        let domain = BoxDomain::new(lengths.to_vec(), self.resolution.clone(), boundary)?;
        let mut field = VectorField::zeros(&domain, self.ncomp);
        field.data_mut().copy_from_slice(&self.data);
        Ok(field)
    }
}

/// Legacy VTK STRUCTURED_POINTS emission, ASCII, cell-centered samples
/// declared as point data on the center lattice.
pub fn write_vtk(w: &mut impl Write, field: &VectorField, name: &str) -> io::Result<()> {
    let domain = field.domain();
    let dim = domain.dim();
    assert!(dim <= 3, "VTK output covers up to three axes");
    let res = |a: usize| if a < dim { domain.resolution()[a] } else { 1 };
    let spacing = |a: usize| if a < dim { domain.spacing(a) } else { 1.0 };
    let origin = |a: usize| if a < dim { domain.coord(a, 0) } else { 0.0 };

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", res(0), res(1), res(2))?;
    writeln!(w, "ORIGIN {:e} {:e} {:e}", origin(0), origin(1), origin(2))?;
    writeln!(w, "SPACING {:e} {:e} {:e}", spacing(0), spacing(1), spacing(2))?;
    writeln!(w, "POINT_DATA {}", domain.num_points())?;
    writeln!(w, "VECTORS magnetization double")?;
    let ncomp = field.ncomp();
    for p in 0..domain.num_points() {
        let u = field.at(p);
        let comp = |c: usize| if c < ncomp { u[c] } else { 0.0 };
        writeln!(w, "{:e} {:e} {:e}", comp(0), comp(1), comp(2))?;
    }
    Ok(())
}
