//! Conductive polarization tensors (CPTs), their transform laws and the
//! invariant shape descriptors built from their singular values.
//!
//! A CPT is a 9x9 complex matrix assembled from nine 3x3 blocks
//! `M[l][l']`; block `(l, l')` occupies rows `3l..3l+3` and columns
//! `3l'..3l'+3` (zero-based). Column `i` of block `(l, l')` is
//! `1/2 e_l x int_B xi_{l'} (theta_i + e_i x xi) dxi`, which forces row `l`
//! of every block `(l, .)` to vanish identically: the 9x9 rows `0, 4, 8`
//! are structurally zero.

use nalgebra::{Matrix3, SMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 9x9 real matrix.
pub type Matrix9 = SMatrix<f64, 9, 9>;
/// 9x9 complex matrix.
pub type Matrix9C = SMatrix<Complex64, 9, 9>;

/// Upper bound on the induction number `nu = k alpha^2` for which the
/// leading-order model is trusted; beyond it the skin depth is small
/// compared to the target and the expansion degrades.
pub const NU_MAX: f64 = 4.0;

/// Electromagnetic constants of a target and the operating frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Background permeability (H/m).
    pub mu0: f64,
    /// Target permeability (H/m); must equal `mu0`.
    pub mu_star: f64,
    /// Target conductivity (S/m).
    pub sigma_star: f64,
    /// Characteristic target size (m).
    pub alpha: f64,
    /// Angular frequency (rad/s).
    pub omega: f64,
}

impl PhysicalConfig {
    pub fn new(mu0: f64, mu_star: f64, sigma_star: f64, alpha: f64, omega: f64) -> Result<Self> {
        for (name, v) in [
            ("mu0", mu0),
            ("mu_star", mu_star),
            ("sigma_star", sigma_star),
            ("alpha", alpha),
            ("omega", omega),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if (mu_star - mu0).abs() > 1e-12 * mu0 {
            return Err(Error::Domain(format!(
                "mu_star = {mu_star} must equal mu0 = {mu0}: only non-magnetic targets are modelled"
            )));
        }
        Ok(Self { mu0, mu_star, sigma_star, alpha, omega })
    }

    /// `k = omega mu0 sigma_star` (1/m^2).
    pub fn k(&self) -> f64 {
        self.omega * self.mu0 * self.sigma_star
    }

    /// Dimensionless induction number `nu = k alpha^2`.
    pub fn nu(&self) -> f64 {
        self.k() * self.alpha * self.alpha
    }

    /// `k alpha^5`, the scale factor carried by the measured tensor.
    pub fn k_alpha5(&self) -> f64 {
        self.k() * self.alpha.powi(5)
    }

    /// False when `nu > NU_MAX` and the leading-order model degrades.
    pub fn asymptotic_valid(&self) -> bool {
        self.nu() <= NU_MAX
    }

    /// Same constants at a different angular frequency.
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.mu0, self.mu_star, self.sigma_star, self.alpha, omega)
    }
}

/// A proper rotation of R^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    o: Matrix3<f64>,
}

impl Rotation {
    /// Wraps a matrix after checking orthogonality and `det = +1`
    /// to 1e-12.
    pub fn new(o: Matrix3<f64>) -> Result<Self> {
        let ortho = (o.transpose() * o - Matrix3::identity()).norm();
        if ortho > 1e-12 {
            return Err(Error::Domain(format!("matrix is not orthogonal: |O^T O - I| = {ortho:.3e}")));
        }
        let det = o.determinant();
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("matrix is not a proper rotation: det = {det}")));
        }
        Ok(Self { o })
    }

    pub fn identity() -> Self {
        Self { o: Matrix3::identity() }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain("rotation axis must be a nonzero finite vector".into()));
        }
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Ok(Self { o: *r.matrix() })
    }

    /// Uniformly distributed random rotation (normalized 4D Gaussian
    /// quaternion).
    pub fn random<R: rand::Rng>(rng: &mut R) -> Self {
        use rand_distr::StandardNormal;
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let u = nalgebra::UnitQuaternion::from_quaternion(q);
        Self { o: *u.to_rotation_matrix().matrix() }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.o
    }
}

/// Block-diagonal `diag(O, O, O)`: the inner-index action of a rotation
/// on the 9x9 tensor layout.
pub fn build_o1(o: &Rotation) -> Matrix9 {
    let mut m = Matrix9::zeros();
    for b in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                m[(3 * b + i, 3 * b + j)] = o.o[(i, j)];
            }
        }
    }
    m
}

/// Kronecker structure `O (x) I3`: 3x3 blocks `O_ij I3`, the block-index
/// action of a rotation.
pub fn build_o2(o: &Rotation) -> Matrix9 {
    let mut m = Matrix9::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for d in 0..3 {
                m[(3 * i + d, 3 * j + d)] = o.o[(i, j)];
            }
        }
    }
    m
}

/// The 9x9 conductive polarization tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CptTensor {
    m: Matrix9C,
}

/// 9x9 rows that the block structure forces to zero (row `l` of every
/// block-row `l`).
pub const ZERO_ROWS: [usize; 3] = [0, 4, 8];

impl CptTensor {
    /// Builds a tensor, requiring finite entries and structural zero rows
    /// within `1e-12 |M|_F`.
    pub fn new(m: Matrix9C) -> Result<Self> {
        Self::with_tolerance(m, 1e-12)
    }

    /// As [`CptTensor::new`] with an explicit relative tolerance on the
    /// zero-row entries. Offending entries are reported, never zeroed.
    pub fn with_tolerance(m: Matrix9C, tol_rel: f64) -> Result<Self> {
        if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("tensor contains non-finite entries".into()));
        }
        let scale = m.map(|c| c.norm_sqr()).sum().sqrt();
        let violation = zero_row_violation(&m);
        let tol = tol_rel * scale;
        if violation > tol && scale > 0.0 {
            return Err(Error::ZeroRowViolation { violation, tol });
        }
        Ok(Self { m })
    }

    pub fn zeros() -> Self {
        Self { m: Matrix9C::zeros() }
    }

    pub fn from_real(m: &Matrix9) -> Result<Self> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    /// The isotropic tensor of a ball-symmetric target: entry
    /// `(3l+j, 3l'+i) = a/2 (delta_ij delta_ll' - delta_li delta_jl')`.
    /// Its nonzero singular values are `|a|` with multiplicity three and
    /// it is exactly invariant under [`rotate_cpt`].
    pub fn isotropic(a: Complex64) -> Self {
        let mut m = Matrix9C::zeros();
        for l in 0..3 {
            for lp in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let v = 0.5
                            * ((i == j && l == lp) as u8 as f64
                                - (l == i && j == lp) as u8 as f64);
                        m[(3 * l + j, 3 * lp + i)] = a * v;
                    }
                }
            }
        }
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix9C {
        &self.m
    }

    /// Block `M[l][l']` (zero-based indices).
    pub fn block(&self, l: usize, lp: usize) -> Matrix3<Complex64> {
        assert!(l < 3 && lp < 3);
        let mut b = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                b[(i, j)] = self.m[(3 * l + i, 3 * lp + j)];
            }
        }
        b
    }

    /// Entrywise real part as a 9x9 real matrix.
    pub fn real(&self) -> Matrix9 {
        self.m.map(|c| c.re)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { m: self.m.map(|x| x * c) }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.map(|c| c.norm_sqr()).sum().sqrt()
    }

    /// Largest magnitude found on a structurally-zero row.
    pub fn zero_row_violation(&self) -> f64 {
        zero_row_violation(&self.m)
    }

    /// Singular values of `Re M`, descending.
    pub fn singular_values_real(&self) -> Vec<f64> {
        let sv = self.real().singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Singular values of the complex matrix, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let sv = self.m.singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

fn zero_row_violation(m: &Matrix9C) -> f64 {
    let mut worst: f64 = 0.0;
    for &r in &ZERO_ROWS {
        for c in 0..9 {
            worst = worst.max(m[(r, c)].norm());
        }
    }
    worst
}

/// Conjugates a CPT by a rotation: `O2 O1 M O1^T O2^T`, the tensor of the
/// rotated target. Fails with [`Error::ZeroRowViolation`] if the result
/// breaks the structural invariant beyond `1e-10 |M|_F`, which signals a
/// malformed input.
pub fn rotate_cpt(m: &CptTensor, o: &Rotation) -> Result<CptTensor> {
    let q = build_o2(o) * build_o1(o);
    let qc = q.map(|x| Complex64::new(x, 0.0));
    let rotated = qc * m.m * qc.transpose();
    CptTensor::with_tolerance(rotated, 1e-10)
}

/// Scaling law for a dilation by `s`: the tensor of the scaled target at
/// frequency-conductivity product `omega sigma` equals `s^5` times the
/// unit-scale tensor evaluated at `omega sigma s^2`. Returns
/// `(s^5, omega_sigma s^2)`.
pub fn scaling_map(s: f64, omega_sigma: f64) -> Result<(f64, f64)> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain(format!("scale factor must be positive, got {s}")));
    }
    Ok((s.powi(5), omega_sigma * s * s))
}

/// Multi-frequency invariant descriptor: per frequency the three largest
/// singular values of `Re M`, concatenated frequency-major and divided by
/// the global maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
}

impl Descriptor {
    /// Builds a descriptor from raw per-frequency singular-value triples
    /// (frequency-major). This is the normalization step shared by
    /// dictionary construction and recovery.
    pub fn from_singular_values(frequencies: &[f64], raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.len() != 3 * frequencies.len() {
            return Err(Error::InconsistentInputs(format!(
                "need 3 singular values per frequency, got {} values for {} frequencies",
                raw.len(),
                frequencies.len()
            )));
        }
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 1e-14) {
            return Err(Error::DegenerateTensor { max_sv: max });
        }
        let values = raw.iter().map(|v| v / max).collect();
        Ok(Self { frequencies: frequencies.to_vec(), values })
    }

    /// Number of frequencies (descriptor length is `3F`).
    pub fn num_frequencies(&self) -> usize {
        self.values.len() / 3
    }

    /// Euclidean distance to another descriptor.
    pub fn distance(&self, other: &Descriptor) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::LengthMismatch { query: self.values.len(), entry: other.values.len() });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Descriptor of a list of tensors at the given frequencies, taking the
/// three largest singular values of `Re M` per frequency.
pub fn descriptor_from_cpts(tensors: &[CptTensor], omegas: &[f64]) -> Result<Descriptor> {
    if tensors.is_empty() || tensors.len() != omegas.len() {
        return Err(Error::InconsistentInputs(format!(
            "need one tensor per frequency, got {} tensors and {} frequencies",
            tensors.len(),
            omegas.len()
        )));
    }
    let mut raw = Vec::with_capacity(3 * tensors.len());
    for t in tensors {
        let sv = t.singular_values_real();
        raw.extend_from_slice(&sv[..3]);
    }
    Descriptor::from_singular_values(omegas, &raw)
}

/// A tensor tagged with the angular frequency it was computed at; the
/// JSON serialization unit.
#[derive(Debug, Clone)]
pub struct CptRecord {
    pub omega: f64,
    pub tensor: CptTensor,
}

#[derive(Serialize, Deserialize)]
struct CptJson {
    omega: f64,
    blocks: Vec<Vec<[f64; 2]>>,
}

impl CptRecord {
    pub fn to_json(&self) -> serde_json::Value {
        let blocks = (0..9)
            .map(|r| {
                (0..9)
                    .map(|c| {
                        let z = self.tensor.m[(r, c)];
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        serde_json::to_value(CptJson { omega: self.omega, blocks }).expect("serializable")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: CptJson = serde_json::from_value(v.clone())?;
        if j.blocks.len() != 9 || j.blocks.iter().any(|r| r.len() != 9) {
            return Err(Error::Format("CPT JSON must contain a 9x9 entry grid".into()));
        }
        let mut m = Matrix9C::zeros();
        for (r, row) in j.blocks.iter().enumerate() {
            for (c, &[re, im]) in row.iter().enumerate() {
                m[(r, c)] = Complex64::new(re, im);
            }
        }
        Ok(Self { omega: j.omega, tensor: CptTensor::with_tolerance(m, 1e-8)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random tensor with the physical row structure: the 9x9 entry at
    /// `(3l+j, c)` is minus the entry at `(3j+l, c)` because each column
    /// arises from a cross product with `e_l`. Zero rows follow.
    fn random_cpt(rng: &mut ChaCha8Rng) -> CptTensor {
        use rand::Rng;
        let mut m = Matrix9C::zeros();
        for l in 0..3 {
            for j in (l + 1)..3 {
                for c in 0..9 {
                    let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    m[(3 * l + j, c)] = v;
                    m[(3 * j + l, c)] = -v;
                }
            }
        }
        CptTensor::new(m).unwrap()
    }

    #[test]
    fn physical_config_rejects_bad_values() {
        assert!(PhysicalConfig::new(1.2566e-6, 1.2566e-6, 5.97e7, 0.01, 133.5).is_ok());
        assert!(PhysicalConfig::new(-1.0, -1.0, 5.97e7, 0.01, 133.5).is_err());
        assert!(PhysicalConfig::new(1.2566e-6, 1.3e-6, 5.97e7, 0.01, 133.5).is_err());
        assert!(PhysicalConfig::new(1.2566e-6, 1.2566e-6, 0.0, 0.01, 133.5).is_err());
    }

    #[test]
    fn nu_of_reference_configuration_is_near_one() {
        let c = PhysicalConfig::new(1.2566e-6, 1.2566e-6, 5.97e7, 0.01, 133.5).unwrap();
        assert!((c.nu() - 1.0016).abs() < 2e-3, "nu = {}", c.nu());
        assert!(c.asymptotic_valid());
        let hot = c.with_omega(600.0).unwrap();
        assert!(!hot.asymptotic_valid());
    }

    #[test]
    fn o1_identity_and_pi_rotation() {
        assert_eq!(build_o1(&Rotation::identity()), Matrix9::identity());
        let o = Rotation::new(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))).unwrap();
        let m = build_o1(&o);
        for b in 0..3 {
            assert_eq!(m[(3 * b, 3 * b)], -1.0);
            assert_eq!(m[(3 * b + 1, 3 * b + 1)], -1.0);
            assert_eq!(m[(3 * b + 2, 3 * b + 2)], 1.0);
        }
        assert!((m.transpose() * m - Matrix9::identity()).norm() < 1e-12);
    }

    #[test]
    fn o2_identity_and_diagonal_case() {
        assert_eq!(build_o2(&Rotation::identity()), Matrix9::identity());
        let o = Rotation::new(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))).unwrap();
        let m = build_o2(&o);
        for d in 0..3 {
            assert_eq!(m[(d, d)], -1.0);
            assert_eq!(m[(3 + d, 3 + d)], -1.0);
            assert_eq!(m[(6 + d, 6 + d)], 1.0);
        }
    }

    #[test]
    fn o1_o2_orthogonal_for_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let o = Rotation::random(&mut rng);
            let o1 = build_o1(&o);
            let o2 = build_o2(&o);
            assert!((o1.transpose() * o1 - Matrix9::identity()).norm() < 1e-12);
            assert!((o2.transpose() * o2 - Matrix9::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn rotate_by_identity_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_cpt(&mut rng);
        let r = rotate_cpt(&m, &Rotation::identity()).unwrap();
        assert!((r.matrix() - m.matrix()).map(|c| c.norm_sqr()).sum().sqrt() < 1e-14);
    }

    #[test]
    fn rotation_preserves_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let m = random_cpt(&mut rng);
            let o = Rotation::random(&mut rng);
            let r = rotate_cpt(&m, &o).unwrap();
            let s0 = m.singular_values();
            let s1 = r.singular_values();
            for (a, b) in s0.iter().zip(&s1) {
                assert!((a - b).abs() <= 1e-10 * s0[0], "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rotation_composition_matches_composed_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_cpt(&mut rng);
            let oa = Rotation::random(&mut rng);
            let ob = Rotation::random(&mut rng);
            let ab = Rotation::new(ob.matrix() * oa.matrix()).unwrap();
            let two = rotate_cpt(&rotate_cpt(&m, &oa).unwrap(), &ob).unwrap();
            let one = rotate_cpt(&m, &ab).unwrap();
            let diff = (two.matrix() - one.matrix()).map(|c| c.norm_sqr()).sum().sqrt();
            assert!(diff < 1e-10 * m.frobenius_norm(), "diff = {diff}");
        }
    }

    #[test]
    fn isotropic_tensor_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = CptTensor::isotropic(Complex64::new(0.8282, 0.079));
        let sv = m.singular_values();
        let a = Complex64::new(0.8282, 0.079).norm();
        assert!((sv[0] - a).abs() < 1e-12 && (sv[2] - a).abs() < 1e-12 && sv[3] < 1e-14);
        for _ in 0..20 {
            let o = Rotation::random(&mut rng);
            let r = rotate_cpt(&m, &o).unwrap();
            let diff = (r.matrix() - m.matrix()).map(|c| c.norm_sqr()).sum().sqrt();
            assert!(diff < 1e-8 * m.frobenius_norm(), "diff = {diff}");
        }
    }

    #[test]
    fn rotation_preserves_zero_rows_tightly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = random_cpt(&mut rng);
            let o = Rotation::random(&mut rng);
            let r = rotate_cpt(&m, &o).unwrap();
            assert!(r.zero_row_violation() <= 1e-12 * m.frobenius_norm());
        }
    }

    #[test]
    fn malformed_tensor_is_rejected() {
        let mut m = Matrix9C::zeros();
        m[(0, 3)] = Complex64::new(1.0, 0.0); // row 0 is structurally zero
        assert!(matches!(CptTensor::new(m), Err(Error::ZeroRowViolation { .. })));
    }

    #[test]
    fn scaling_map_cases() {
        assert_eq!(scaling_map(1.0, 133.5).unwrap(), (1.0, 133.5));
        assert_eq!(scaling_map(2.0, 1.0).unwrap(), (32.0, 4.0));
        assert!(scaling_map(0.0, 1.0).is_err());
        assert!(scaling_map(-2.0, 1.0).is_err());
    }

    /// Diagonal helper with prescribed nonzero singular values placed on
    /// rows allowed by the zero-row structure.
    fn diag_cpt(svs: [f64; 3]) -> CptTensor {
        let mut m = Matrix9C::zeros();
        for (k, &s) in svs.iter().enumerate() {
            let r = [1, 2, 3][k];
            m[(r, r)] = Complex64::new(s, 0.0);
        }
        CptTensor::new(m).unwrap()
    }

    #[test]
    fn descriptor_normalizes_reference_sphere_row() {
        let t = diag_cpt([0.8282, 0.8277, 0.8277]);
        let d = descriptor_from_cpts(&[t], &[133.5]).unwrap();
        assert_eq!(d.values[0], 1.0);
        assert!((d.values[1] - 0.9993963).abs() < 1e-6);
        assert!((d.values[2] - 0.9993963).abs() < 1e-6);
    }

    #[test]
    fn descriptor_of_cube_row_is_all_ones() {
        let t = diag_cpt([2.2485, 2.2485, 2.2484]);
        let d = descriptor_from_cpts(&[t], &[133.5]).unwrap();
        assert_eq!(d.values[0], 1.0);
        assert!((d.values[1] - 1.0).abs() < 1e-12);
        assert!((d.values[2] - 0.99995552).abs() < 1e-6);
    }

    #[test]
    fn descriptor_of_repeated_tensor_repeats() {
        let t = diag_cpt([2.0, 1.0, 0.5]);
        let one = descriptor_from_cpts(&[t.clone()], &[100.0]).unwrap();
        let two = descriptor_from_cpts(&[t.clone(), t], &[100.0, 110.0]).unwrap();
        assert_eq!(&two.values[..3], &one.values[..]);
        assert_eq!(&two.values[3..], &one.values[..]);
    }

    #[test]
    fn descriptor_rejects_degenerate_tensor() {
        let t = CptTensor::zeros();
        assert!(matches!(
            descriptor_from_cpts(&[t], &[1.0]),
            Err(Error::DegenerateTensor { .. })
        ));
    }

    #[test]
    fn descriptor_invariant_under_common_rotation_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ts: Vec<CptTensor> = (0..3).map(|_| random_cpt(&mut rng)).collect();
        let omegas = [1.0, 2.0, 3.0];
        let base = descriptor_from_cpts(&ts, &omegas).unwrap();

        let o = Rotation::random(&mut rng);
        let rotated: Vec<CptTensor> = ts.iter().map(|t| rotate_cpt(t, &o).unwrap()).collect();
        let dr = descriptor_from_cpts(&rotated, &omegas).unwrap();
        for (a, b) in base.values.iter().zip(&dr.values) {
            assert!((a - b).abs() < 1e-9);
        }

        let scaled: Vec<CptTensor> =
            ts.iter().map(|t| t.scaled(Complex64::new(7.25, 0.0))).collect();
        let ds = descriptor_from_cpts(&scaled, &omegas).unwrap();
        for (a, b) in base.values.iter().zip(&ds.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cpt_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rec = CptRecord { omega: 133.5, tensor: random_cpt(&mut rng) };
        let v = rec.to_json();
        assert!(v.get("omega").is_some() && v.get("blocks").is_some());
        let back = CptRecord::from_json(&v).unwrap();
        assert_eq!(back.omega, rec.omega);
        assert_eq!(back.tensor.matrix(), rec.tensor.matrix());
    }
}
