//! Stray field of a magnetization confined to a 3-D box.
//!
//! The field is the gradient of the Newtonian potential of the effective
//! charges, h(x) = ∇ ∫ div-free part aside, evaluated cell-averaged: each
//! pair of grid cells interacts through an exactly integrated coefficient,
//! and the resulting block-Toeplitz operator is applied by zero-padded FFT
//! convolution. Uniform magnetization of a cube produces h = −u/3 in its
//! center, and the cell-averaged coefficients reproduce the magnetometric
//! factors of the box exactly.

mod fft;
mod newell;

use std::io;

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{Boundary, BoxDomain, VectorField};
use crate::rng::SplitMix64;
use fft::Fft3;
use newell::{pair_antiderivative, W2};

#[cfg(test)]
pub(crate) use newell::kernel_entry;

/// The six independent components of the symmetric interaction tensor, in
/// storage order.
const COMP_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn pair_index(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => unreachable!("component indices must be < 3"),
    }
}

/// Precomputed convolution weights binding a magnetization on a box grid to
/// its stray field on the same grid.
///
/// Holds both the raw offset tables (for caching and inspection) and their
/// forward transforms on the zero-padded grid (for application). The padded
/// transforms of the offset tables are real because every component is even
/// under simultaneous reflection of all three axes; only the real parts are
/// kept.
pub struct DemagKernel {
    domain: BoxDomain,
    padded: [usize; 3],
    tables: [Vec<f64>; 6],
    spectra: [Vec<f64>; 6],
    plans: Fft3,
}

/// Builds the interaction kernel for a 3-D box, parallelizing the table
/// fill over all available cores.
pub fn build_kernel(domain: &BoxDomain) -> Result<DemagKernel> {
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    build_kernel_jobs(domain, jobs)
}

/// Builds the interaction kernel with an explicit worker count.
pub fn build_kernel_jobs(domain: &BoxDomain, jobs: usize) -> Result<DemagKernel> {
    if domain.dim() != 3 {
        return Err(Error::WrongDimension { need: 3, have: domain.dim() });
    }
    let res = [domain.resolution()[0], domain.resolution()[1], domain.resolution()[2]];
    let d = [domain.spacing(0), domain.spacing(1), domain.spacing(2)];
    let tables = compute_tables(res, d, jobs.max(1));
    Ok(DemagKernel::from_parts(domain.clone(), tables))
}

/// Fills the six offset tables. Offsets run over [−(n−1), n−1] per axis;
/// the entry at offset r is the 27-point second difference of the
/// antiderivative sampled on the cell-corner lattice, so the lattice is
/// evaluated once per component and shared by all offsets.
fn compute_tables(res: [usize; 3], d: [f64; 3], jobs: usize) -> [Vec<f64>; 6] {
    let gdims = [2 * res[0] + 1, 2 * res[1] + 1, 2 * res[2] + 1];
    let tdims = [2 * res[0] - 1, 2 * res[1] - 1, 2 * res[2] - 1];
    let glen: usize = gdims.iter().product();
    let tlen: usize = tdims.iter().product();
    let norm = 1.0 / (4.0 * std::f64::consts::PI * d[0] * d[1] * d[2]);

    let mut fgrid = vec![0.0f64; glen];
    let mut tables: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; tlen]);

    for (p, table) in tables.iter_mut().enumerate() {
        let (a, b) = COMP_PAIRS[p];

        let gslab = gdims[0] * gdims[1];
        let mut gwork: Vec<(usize, &mut [f64])> = fgrid.chunks_mut(gslab).enumerate().collect();
        let per = gwork.len().div_ceil(jobs);
        std::thread::scope(|s| {
            for group in gwork.chunks_mut(per) {
                s.spawn(move || {
                    for (k, slab) in group.iter_mut() {
                        let z = (*k as f64 - res[2] as f64) * d[2];
                        let mut idx = 0;
                        for j in 0..gdims[1] {
                            let y = (j as f64 - res[1] as f64) * d[1];
                            for i in 0..gdims[0] {
                                let x = (i as f64 - res[0] as f64) * d[0];
                                slab[idx] = pair_antiderivative(a, b, [x, y, z]);
                                idx += 1;
                            }
                        }
                    }
                });
            }
        });

        let tslab = tdims[0] * tdims[1];
        let fgrid_ref: &[f64] = &fgrid;
        let mut twork: Vec<(usize, &mut [f64])> = table.chunks_mut(tslab).enumerate().collect();
        let per = twork.len().div_ceil(jobs);
        std::thread::scope(|s| {
            for group in twork.chunks_mut(per) {
                s.spawn(move || {
                    for (k, slab) in group.iter_mut() {
                        let mut idx = 0;
                        for j in 0..tdims[1] {
                            for i in 0..tdims[0] {
                                let mut acc = 0.0;
                                for (sk, &wk) in W2.iter().enumerate() {
                                    for (sj, &wj) in W2.iter().enumerate() {
                                        let row =
                                            i + gdims[0] * ((j + sj) + gdims[1] * (*k + sk));
                                        let line = &fgrid_ref[row..row + 3];
                                        acc += wk
                                            * wj
                                            * (W2[0] * line[0] + W2[1] * line[1] + W2[2] * line[2]);
                                    }
                                }
                                slab[idx] = norm * acc;
                                idx += 1;
                            }
                        }
                    }
                });
            }
        });
    }
    tables
}

fn wrap(off: i64, period: usize) -> usize {
    off.rem_euclid(period as i64) as usize
}

impl DemagKernel {
    fn from_parts(domain: BoxDomain, tables: [Vec<f64>; 6]) -> Self {
        let res = [domain.resolution()[0], domain.resolution()[1], domain.resolution()[2]];
        let padded = [2 * res[0], 2 * res[1], 2 * res[2]];
        let tdims = [2 * res[0] - 1, 2 * res[1] - 1, 2 * res[2] - 1];
        let plans = Fft3::new(padded);
        let plen = plans.len();
        let spectra: [Vec<f64>; 6] = std::array::from_fn(|p| {
            let mut buf = vec![Complex::new(0.0, 0.0); plen];
            let mut idx = 0;
            for k in 0..tdims[2] {
                let mk = wrap(k as i64 - (res[2] as i64 - 1), padded[2]);
                for j in 0..tdims[1] {
                    let mj = wrap(j as i64 - (res[1] as i64 - 1), padded[1]);
                    for i in 0..tdims[0] {
                        let mi = wrap(i as i64 - (res[0] as i64 - 1), padded[0]);
                        buf[mi + padded[0] * (mj + padded[1] * mk)] =
                            Complex::new(tables[p][idx], 0.0);
                        idx += 1;
                    }
                }
            }
            plans.forward(&mut buf);
            buf.iter().map(|c| c.re).collect()
        });
        Self { domain, padded, tables, spectra, plans }
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Grid the offset tables were integrated for, per axis.
    pub fn build_resolution(&self) -> &[usize] {
        self.domain.resolution()
    }

    #[cfg(test)]
    fn table(&self, pair: usize) -> &[f64] {
        &self.tables[pair]
    }

    #[cfg(test)]
    fn dc_response(&self, pair: usize) -> f64 {
        self.spectra[pair][0]
    }

    /// Stray field of `u` by zero-padded fast convolution. Linear in `u`.
    pub fn demag_field(&self, u: &VectorField) -> Result<VectorField> {
        if u.ncomp() != 3 {
            return Err(Error::WrongDimension { need: 3, have: u.ncomp() });
        }
        if !u.domain().same_grid(&self.domain) {
            return Err(Error::DomainMismatch(
                "field lives on a different grid than the kernel was built for".into(),
            ));
        }
        let res = [
            self.domain.resolution()[0],
            self.domain.resolution()[1],
            self.domain.resolution()[2],
        ];
        let plen = self.plans.len();
        let (p0, p1) = (self.padded[0], self.padded[1]);

        let mut uhat: Vec<Vec<Complex<f64>>> = Vec::with_capacity(3);
        for b in 0..3 {
            let mut buf = vec![Complex::new(0.0, 0.0); plen];
            let mut p = 0;
            for k in 0..res[2] {
                for j in 0..res[1] {
                    let row = p0 * (j + p1 * k);
                    for i in 0..res[0] {
                        buf[row + i] = Complex::new(u.at(p)[b], 0.0);
                        p += 1;
                    }
                }
            }
            self.plans.forward(&mut buf);
            uhat.push(buf);
        }

        let mut out = VectorField::zeros(&self.domain, 3);
        let scale = 1.0 / plen as f64;
        let mut work = vec![Complex::new(0.0, 0.0); plen];
        for a in 0..3 {
            for v in work.iter_mut() {
                *v = Complex::new(0.0, 0.0);
            }
            for b in 0..3 {
                let spec = &self.spectra[pair_index(a, b)];
                let ub = &uhat[b];
                for m in 0..plen {
                    work[m] += spec[m] * ub[m];
                }
            }
            self.plans.inverse(&mut work);
            let mut p = 0;
            for k in 0..res[2] {
                for j in 0..res[1] {
                    let row = p0 * (j + p1 * k);
                    for i in 0..res[0] {
                        out.at_mut(p)[a] = work[row + i].re * scale;
                        p += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Writes the kernel in the binary cache format: magic "DMGK", version
    /// byte, dimension byte, boundary byte, then per axis the box length as
    /// a little-endian f64 and the resolution as a little-endian u64, then
    /// the six offset tables as little-endian f64 runs.
    pub fn save_cache<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"DMGK")?;
        let bcode = match self.domain.boundary() {
            Boundary::Neumann => 0u8,
            Boundary::Periodic => 1u8,
        };
        w.write_all(&[1u8, 3u8, bcode])?;
        for a in 0..3 {
            w.write_all(&self.domain.lengths()[a].to_le_bytes())?;
            w.write_all(&(self.domain.resolution()[a] as u64).to_le_bytes())?;
        }
        for t in &self.tables {
            let mut bytes = Vec::with_capacity(t.len() * 8);
            for &v in t {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Reads a kernel previously written by `save_cache` and rebuilds the
    /// padded transforms.
    pub fn load_cache<R: io::Read>(r: &mut R) -> io::Result<DemagKernel> {
        fn bad(msg: &str) -> io::Error {
            io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
        }
        let mut head = [0u8; 7];
        r.read_exact(&mut head)?;
        if &head[..4] != b"DMGK" {
            return Err(bad("not a kernel cache: bad magic"));
        }
        if head[4] != 1 {
            return Err(bad("unsupported kernel cache version"));
        }
        if head[5] != 3 {
            return Err(bad("kernel cache must describe a 3-D box"));
        }
        let boundary = match head[6] {
            0 => Boundary::Neumann,
            1 => Boundary::Periodic,
            _ => return Err(bad("unknown boundary code")),
        };
        let mut lengths = Vec::with_capacity(3);
        let mut res = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut f = [0u8; 8];
            r.read_exact(&mut f)?;
            lengths.push(f64::from_le_bytes(f));
            let mut n = [0u8; 8];
            r.read_exact(&mut n)?;
            let v = u64::from_le_bytes(n);
            if v == 0 || v > (1 << 32) {
                return Err(bad("implausible resolution in kernel cache"));
            }
            res.push(v as usize);
        }
        let domain = BoxDomain::new(lengths, res.clone(), boundary)
            .map_err(|e| bad(&e.to_string()))?;
        let tlen = (2 * res[0] - 1) * (2 * res[1] - 1) * (2 * res[2] - 1);
        let mut tables: [Vec<f64>; 6] = std::array::from_fn(|_| Vec::new());
        for t in tables.iter_mut() {
            let mut bytes = vec![0u8; tlen * 8];
            r.read_exact(&mut bytes)?;
            *t = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
        }
        Ok(DemagKernel::from_parts(domain, tables))
    }
}

/// Largest observed amplification ‖h(u)‖/‖u‖ over random fields, sharpened
/// by power iteration started from the most responsive sample. The
/// continuous operator has norm at most 1.
pub fn operator_norm_probe(kernel: &DemagKernel, trials: usize, seed: u64) -> f64 {
    assert!(trials >= 1, "at least one trial");
    let mut rng = SplitMix64::new(seed);
    let mut best = 0.0f64;
    let mut sharpest: Option<VectorField> = None;
    for _ in 0..trials {
        let mut u = VectorField::zeros(kernel.domain(), 3);
        for v in u.data_mut() {
            *v = rng.next_symmetric();
        }
        let nu = u.l2_norm();
        if nu == 0.0 {
            continue;
        }
        let h = kernel.demag_field(&u).expect("probe field on the kernel's own grid");
        let ratio = h.l2_norm() / nu;
        if ratio >= best {
            best = ratio;
            sharpest = Some(u);
        }
    }
    let mut v = sharpest.expect("nonzero trial");
    for _ in 0..20 {
        let nv = v.l2_norm();
        if nv < 1e-300 {
            break;
        }
        v.scale(1.0 / nv);
        let w = kernel.demag_field(&v).expect("probe field on the kernel's own grid");
        best = best.max(w.l2_norm());
        v = w;
    }
    best
}
