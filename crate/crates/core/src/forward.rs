//! Dipole background fields and assembly of the multistatic response
//! (MSR) matrix from a polarization tensor, with calibrated Gaussian
//! noise injection.
//!
//! The clean MSR factors as `A = U M_q V_p`: `U` collects receiver-side
//! Green's-function Hessians (N x 9), `M_q = k alpha^5 Re(q^T M^{l,l'})`
//! stacked over blocks (9 x 3), and `V_p` collects source-side Hessians
//! applied to the dipole direction (3 x M).

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{CptTensor, PhysicalConfig};

/// 9x3 real matrix holding `q`-contracted tensor rows.
pub type Matrix9x3 = SMatrix<f64, 9, 3>;

/// Distance below which two points are treated as coincident with the
/// kernel singularity.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Free-space Laplace kernel `G(x, y) = 1 / (4 pi |x - y|)`.
pub fn green(x: &Vector3<f64>, y: &Vector3<f64>) -> Result<f64> {
    let dist = (x - y).norm();
    if dist < SINGULAR_TOL {
        return Err(Error::SingularPoint { dist });
    }
    Ok(1.0 / (4.0 * std::f64::consts::PI * dist))
}

/// Hessian `D^2_x G(x, y) = (3 r r^T - I) / (4 pi |r|^3)` with
/// `r = x - y` (unit direction). Symmetric and trace-free away from the
/// singularity.
pub fn green_hessian(x: &Vector3<f64>, y: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = x - y;
    let dist = r.norm();
    if dist < SINGULAR_TOL {
        return Err(Error::SingularPoint { dist });
    }
    let rh = r / dist;
    let scale = 1.0 / (4.0 * std::f64::consts::PI * dist.powi(3));
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            h[(i, j)] = scale * (3.0 * rh[i] * rh[j] - ((i == j) as u8 as f64));
        }
    }
    Ok(h)
}

/// Magnetic field at `x` of a unit dipole at `s` with moment direction
/// `p`: `H_0(x) = D^2_x G(x, s) p`.
pub fn background_field(x: &Vector3<f64>, s: &Vector3<f64>, p: &Vector3<f64>) -> Result<Vector3<f64>> {
    Ok(green_hessian(x, s)? * p)
}

/// Source and receiver layout with the dipole and measurement directions.
#[derive(Debug, Clone)]
pub struct SensorArray {
    pub sources: Vec<Vector3<f64>>,
    pub receivers: Vec<Vector3<f64>>,
    /// Source dipole direction (unit).
    pub p: Vector3<f64>,
    /// Receiver measurement direction (unit).
    pub q: Vector3<f64>,
}

impl SensorArray {
    pub fn new(
        sources: Vec<Vector3<f64>>,
        receivers: Vec<Vector3<f64>>,
        p: Vector3<f64>,
        q: Vector3<f64>,
    ) -> Result<Self> {
        if sources.is_empty() || receivers.is_empty() {
            return Err(Error::Geometry("need at least one source and one receiver".into()));
        }
        for (name, v) in [("p", &p), ("q", &q)] {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Geometry(format!("{name} must be a unit vector, |{name}| = {}", v.norm())));
            }
        }
        for s in &sources {
            for r in &receivers {
                if (s - r).norm() < SINGULAR_TOL {
                    return Err(Error::Geometry(format!("source and receiver coincide at {s:?}")));
                }
            }
        }
        Ok(Self { sources, receivers, p, q })
    }

    /// Standard two-plate layout: `n_side^2` sources on a uniform grid on
    /// `[-2, 2]^2 x {+l}` and the same grid of receivers on
    /// `[-2, 2]^2 x {-l}`, with vertical dipoles `p = q = e3`.
    pub fn plates(l: f64, n_side: usize) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) || n_side < 2 {
            return Err(Error::Geometry(format!("invalid plate layout: l = {l}, n_side = {n_side}")));
        }
        let mut sources = Vec::with_capacity(n_side * n_side);
        let mut receivers = Vec::with_capacity(n_side * n_side);
        let step = 4.0 / (n_side - 1) as f64;
        for i in 0..n_side {
            for j in 0..n_side {
                let x = -2.0 + step * i as f64;
                let y = -2.0 + step * j as f64;
                sources.push(Vector3::new(x, y, l));
                receivers.push(Vector3::new(x, y, -l));
            }
        }
        Self::new(sources, receivers, Vector3::z(), Vector3::z())
    }

    pub fn with_p(mut self, p: Vector3<f64>) -> Result<Self> {
        if (p.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Geometry("p must be a unit vector".into()));
        }
        self.p = p;
        Ok(self)
    }

    pub fn with_q(mut self, q: Vector3<f64>) -> Result<Self> {
        if (q.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Geometry("q must be a unit vector".into()));
        }
        self.q = q;
        Ok(self)
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }
}

/// A target: center, unit-scale polarization tensor and physical
/// constants.
#[derive(Debug, Clone)]
pub struct TargetInstance {
    pub z: Vector3<f64>,
    pub cpt: CptTensor,
    pub config: PhysicalConfig,
}

impl TargetInstance {
    /// Smallest distance from the center to any sensor.
    pub fn sensor_clearance(&self, array: &SensorArray) -> f64 {
        array
            .sources
            .iter()
            .chain(array.receivers.iter())
            .map(|s| (s - self.z).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Multistatic response matrix: entry `(n, m)` is the q-component of the
/// field perturbation at receiver `n` due to source `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrMatrix {
    pub a: DMatrix<f64>,
    pub omega: f64,
    pub q: Vector3<f64>,
    /// Injected noise level; 0 for clean data.
    pub sigma_noise: f64,
    /// Noise seed; `None` for clean data.
    pub seed: Option<u64>,
}

impl MsrMatrix {
    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    /// Largest singular value.
    pub fn sigma1(&self) -> f64 {
        self.a.clone().singular_values()[0]
    }
}

/// Receiver factor: row `n` holds the nine entries of
/// `D^2 G(r_n, z)` in row-major `(l, l')` order.
pub fn assemble_u(z: &Vector3<f64>, receivers: &[Vector3<f64>]) -> Result<DMatrix<f64>> {
    let mut u = DMatrix::zeros(receivers.len(), 9);
    for (n, r) in receivers.iter().enumerate() {
        let h = green_hessian(r, z)?;
        for l in 0..3 {
            for lp in 0..3 {
                u[(n, 3 * l + lp)] = h[(l, lp)];
            }
        }
    }
    Ok(u)
}

/// Source factor: column `m` is `D^2 G(z, s_m) p`.
pub fn assemble_vp(z: &Vector3<f64>, sources: &[Vector3<f64>], p: &Vector3<f64>) -> Result<DMatrix<f64>> {
    let mut v = DMatrix::zeros(3, sources.len());
    for (m, s) in sources.iter().enumerate() {
        let col = green_hessian(z, s)? * p;
        for i in 0..3 {
            v[(i, m)] = col[i];
        }
    }
    Ok(v)
}

/// Measured-tensor factor: row `3l + l'` is `k alpha^5 q^T Re M[l][l']`.
pub fn assemble_mq(cpt: &CptTensor, q: &Vector3<f64>, config: &PhysicalConfig) -> Matrix9x3 {
    let scale = config.k_alpha5();
    let re = cpt.real();
    let mut mq = Matrix9x3::zeros();
    for l in 0..3 {
        for lp in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for i in 0..3 {
                    acc += q[i] * re[(3 * l + i, 3 * lp + j)];
                }
                mq[(3 * l + lp, j)] = scale * acc;
            }
        }
    }
    mq
}

/// Clean MSR of a single target: the triple product `U M_q V_p`.
pub fn msr_forward(target: &TargetInstance, array: &SensorArray) -> Result<MsrMatrix> {
    msr_forward_multi(std::slice::from_ref(target), array)
}

/// Clean MSR of several well-separated targets by superposition.
pub fn msr_forward_multi(targets: &[TargetInstance], array: &SensorArray) -> Result<MsrMatrix> {
    if targets.is_empty() {
        return Err(Error::InconsistentInputs("no targets given".into()));
    }
    let omega = targets[0].config.omega;
    if targets.iter().any(|t| t.config.omega != omega) {
        return Err(Error::InconsistentInputs("targets disagree on omega".into()));
    }
    let mut a = DMatrix::zeros(array.num_receivers(), array.num_sources());
    for t in targets {
        if t.sensor_clearance(array) < SINGULAR_TOL {
            return Err(Error::Geometry(format!("target at {:?} coincides with a sensor", t.z)));
        }
        let u = assemble_u(&t.z, &array.receivers)?;
        let vp = assemble_vp(&t.z, &array.sources, &array.p)?;
        let mq = assemble_mq(&t.cpt, &array.q, &t.config);
        let mq_dyn = DMatrix::from_fn(9, 3, |r, c| mq[(r, c)]);
        a += u * mq_dyn * vp;
    }
    Ok(MsrMatrix { a, omega, q: array.q, sigma_noise: 0.0, seed: None })
}

/// Adds calibrated measurement noise `(sigma_noise / sqrt(M)) W` with
/// `W` i.i.d. standard Gaussian drawn deterministically from `seed`
/// (row-major fill order).
pub fn add_noise(msr: &MsrMatrix, sigma_noise: f64, seed: u64) -> Result<MsrMatrix> {
    if !(sigma_noise.is_finite() && sigma_noise >= 0.0) {
        return Err(Error::Domain(format!("sigma_noise must be nonnegative, got {sigma_noise}")));
    }
    if sigma_noise == 0.0 {
        return Ok(msr.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scale = sigma_noise / (msr.ncols() as f64).sqrt();
    let mut a = msr.a.clone();
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let w: f64 = StandardNormal.sample(&mut rng);
            a[(r, c)] += scale * w;
        }
    }
    Ok(MsrMatrix { a, omega: msr.omega, q: msr.q, sigma_noise, seed: Some(seed) })
}

/// Signal-to-noise ratio `sigma_1(A_clean) / sigma_noise`; the noise
/// level is its reciprocal.
pub fn snr(clean: &MsrMatrix, sigma_noise: f64) -> Result<f64> {
    if !(sigma_noise.is_finite() && sigma_noise > 0.0) {
        return Err(Error::Domain(format!("sigma_noise must be positive, got {sigma_noise}")));
    }
    Ok(clean.sigma1() / sigma_noise)
}

// ---------------------------------------------------------------------
// Binary container and CSV export
// ---------------------------------------------------------------------

const EMSR_MAGIC: &[u8; 4] = b"EMSR";
const EMSR_VERSION: u32 = 1;
/// Seed slot value marking clean data.
const SEED_SENTINEL: u64 = u64::MAX;

/// Serializes to the `EMSR` container: magic, version, dimensions,
/// omega, sigma_noise, seed-or-sentinel, then row-major `f64` payload
/// (little endian).
pub fn write_emsr(msr: &MsrMatrix, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(44 + 8 * msr.a.len());
    buf.extend_from_slice(EMSR_MAGIC);
    buf.write_u32::<LittleEndian>(EMSR_VERSION)?;
    buf.write_u32::<LittleEndian>(msr.nrows() as u32)?;
    buf.write_u32::<LittleEndian>(msr.ncols() as u32)?;
    buf.write_f64::<LittleEndian>(msr.omega)?;
    buf.write_f64::<LittleEndian>(msr.sigma_noise)?;
    buf.write_u64::<LittleEndian>(msr.seed.unwrap_or(SEED_SENTINEL))?;
    for r in 0..msr.nrows() {
        for c in 0..msr.ncols() {
            buf.write_f64::<LittleEndian>(msr.a[(r, c)])?;
        }
    }
    crate::util::atomic_write(path, &buf)?;
    Ok(())
}

/// Reads an `EMSR` container. The measurement direction `q` is not part
/// of the container; the caller supplies it from run metadata.
pub fn read_emsr(path: &Path, q: Vector3<f64>) -> Result<MsrMatrix> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != EMSR_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = f.read_u32::<LittleEndian>()?;
    if version != EMSR_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = f.read_u32::<LittleEndian>()? as usize;
    let m = f.read_u32::<LittleEndian>()? as usize;
    if n == 0 || m == 0 || n.saturating_mul(m) > (1 << 28) {
        return Err(Error::Format(format!("implausible dimensions {n} x {m}")));
    }
    let omega = f.read_f64::<LittleEndian>()?;
    let sigma_noise = f.read_f64::<LittleEndian>()?;
    let seed_raw = f.read_u64::<LittleEndian>()?;
    let mut a = DMatrix::zeros(n, m);
    for r in 0..n {
        for c in 0..m {
            a[(r, c)] = f.read_f64::<LittleEndian>()?;
        }
    }
    let seed = if seed_raw == SEED_SENTINEL { None } else { Some(seed_raw) };
    Ok(MsrMatrix { a, omega, q, sigma_noise, seed })
}

/// Plain CSV dump of the matrix for inspection.
pub fn write_msr_csv(msr: &MsrMatrix, w: &mut dyn Write) -> Result<()> {
    for r in 0..msr.nrows() {
        let row: Vec<String> = (0..msr.ncols()).map(|c| format!("{:.12e}", msr.a[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
