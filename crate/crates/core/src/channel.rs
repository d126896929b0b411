//! Domain types, steering-vector generators, sensing dictionaries, and the
//! random scenario sampler.
//!
//! Conventions used throughout:
//!
//! * All angles are radians; only `sin(angle)` ever enters a steering phase,
//!   so the "spatial frequency" of an angle is `(spacing / wavelength) *
//!   sin(angle)`.
//! * Far-field steering vectors follow the uncentered convention (first entry
//!   is 1). Near-field vectors and the far-field limit columns of the polar
//!   dictionary are centered on the array midpoint, which is where the
//!   spherical-wave phase reference lives.

use crate::error::{Error, Result};
use crate::linalg::rel_err;
use crate::{CMat, CVec, Cplx, SPEED_OF_LIGHT};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Scenario dimensions and physical parameters.
///
/// `gain_exponents` holds the BS-RIS and RIS-user path-loss exponents; path
/// gains are drawn as `CN(0, 1e-3 * d^-exponent)` with `d` in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antenna count.
    pub n_bs: usize,
    /// Per-user antenna count.
    pub n_ue: usize,
    /// RIS element count.
    pub m_ris: usize,
    /// Number of users.
    pub n_users: usize,
    /// BS-RIS propagation path count.
    pub n_bs_paths: usize,
    /// RIS-user path count per user.
    pub n_ue_paths: Vec<usize>,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Element spacing at the BS in meters.
    pub spacing_bs: f64,
    /// Element spacing at the RIS in meters.
    pub spacing_ris: f64,
    /// Element spacing at the users in meters.
    pub spacing_ue: f64,
    /// Uplink transmit power in watts.
    pub tx_power: f64,
    /// Noise variance in watts.
    pub noise_var: f64,
    /// BS-RIS distance in meters.
    pub dist_bs_ris: f64,
    /// RIS-user distance interval in meters.
    pub dist_ris_ue: (f64, f64),
    /// Path-loss exponents (BS-RIS, RIS-user).
    pub gain_exponents: (f64, f64),
    /// Master seed for scenario sampling.
    pub seed: u64,
}

impl SystemConfig {
    /// Full-scale reference setup: 128 BS antennas, 256 RIS elements, 32
    /// user antennas, 4 users, 3 BS-RIS paths, 30 GHz carrier,
    /// half-wavelength spacings, 1 W transmit power, 100 m BS-RIS distance,
    /// users between 1 m and 50 m.
    pub fn full_scale() -> Self {
        let carrier_hz = 30.0e9;
        let half = SPEED_OF_LIGHT / carrier_hz / 2.0;
        SystemConfig {
            n_bs: 128,
            n_ue: 32,
            m_ris: 256,
            n_users: 4,
            n_bs_paths: 3,
            n_ue_paths: vec![1; 4],
            carrier_hz,
            spacing_bs: half,
            spacing_ris: half,
            spacing_ue: half,
            tx_power: 1.0,
            noise_var: 1e-14,
            dist_bs_ris: 100.0,
            dist_ris_ue: (1.0, 50.0),
            gain_exponents: (2.8, 2.2),
            seed: 1,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Midpoint of the RIS-user distance interval.
    pub fn dist_ris_ue_mid(&self) -> f64 {
        0.5 * (self.dist_ris_ue.0 + self.dist_ris_ue.1)
    }

    /// Total virtual-user count when every path is resolved.
    pub fn virtual_user_count(&self) -> usize {
        self.n_ue_paths.iter().sum()
    }

    /// Validates every field, naming the offending key on failure.
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: key.into(),
                    reason: reason.into(),
                })
            }
        }
        check(self.n_bs >= 1, "n_bs", "must be >= 1")?;
        check(self.n_ue >= 1, "n_ue", "must be >= 1")?;
        check(self.m_ris >= 1, "m_ris", "must be >= 1")?;
        check(self.n_users >= 1, "n_users", "must be >= 1")?;
        check(self.n_bs_paths >= 1, "n_bs_paths", "must be >= 1")?;
        check(
            self.n_ue_paths.len() == self.n_users,
            "n_ue_paths",
            "must list one path count per user",
        )?;
        check(
            self.n_ue_paths.iter().all(|&j| j >= 1),
            "n_ue_paths",
            "every entry must be >= 1",
        )?;
        check(
            self.carrier_hz > 0.0 && self.carrier_hz.is_finite(),
            "carrier_hz",
            "must be positive",
        )?;
        for (key, v) in [
            ("spacing_bs", self.spacing_bs),
            ("spacing_ris", self.spacing_ris),
            ("spacing_ue", self.spacing_ue),
        ] {
            check(v > 0.0 && v.is_finite(), key, "must be positive")?;
        }
        check(self.tx_power > 0.0, "tx_power", "must be positive")?;
        check(
            self.noise_var >= 0.0 && self.noise_var.is_finite(),
            "noise_var",
            "must be >= 0",
        )?;
        check(self.dist_bs_ris > 0.0, "dist_bs_ris", "must be positive")?;
        check(
            self.dist_ris_ue.0 > 0.0 && self.dist_ris_ue.1 >= self.dist_ris_ue.0,
            "dist_ris_ue",
            "interval must be nonempty with positive endpoints",
        )?;
        Ok(())
    }
}

/// One far-field BS-RIS propagation path.
#[derive(Debug, Clone)]
pub struct FarFieldPath {
    pub gain: Cplx,
    /// BS-side angle in radians.
    pub bs_angle: f64,
    /// RIS-side angle in radians; its sine sets the RIS-side spatial
    /// frequency.
    pub ris_angle: f64,
}

/// One near-field RIS-user propagation path.
#[derive(Debug, Clone)]
pub struct NearFieldPath {
    pub gain: Cplx,
    /// RIS-side angle in radians.
    pub ris_angle: f64,
    /// User-side angle in radians.
    pub ue_angle: f64,
    /// Distance from the RIS center to the scatterer/user in meters;
    /// `f64::INFINITY` marks a path snapped onto a far-field grid column.
    pub distance: f64,
}

/// One channel realization: factor channels, their path parameters, and the
/// ground-truth cascaded channels.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// BS-RIS channel, `n_bs x m_ris`.
    pub h_br: CMat,
    /// Per-user RIS-user channels, each `m_ris x n_ue`.
    pub h_ru: Vec<CMat>,
    pub paths_br: Vec<FarFieldPath>,
    pub paths_ru: Vec<Vec<NearFieldPath>>,
    /// Cascaded channels `g_true[k][n] = h_br * Diag(h_ru[k][:, n])`.
    pub g_true: Vec<Vec<CMat>>,
}

/// Overcomplete far-field dictionary with its sine-domain grid.
#[derive(Debug, Clone)]
pub struct AngularDictionary {
    /// `n x d` atom matrix; unit-modulus entries, column norm `sqrt(n)`.
    pub atoms: CMat,
    /// Grid angles in radians (`asin` of the grid sines).
    pub grid_angles: Vec<f64>,
    /// Grid sines, uniform on [-1, 1).
    pub grid_sines: Vec<f64>,
}

/// Joint angle/distance dictionary of near-field steering vectors, with one
/// far-field ring per angle.
#[derive(Debug, Clone)]
pub struct PolarDictionary {
    /// `m x (angles * rings)` atom matrix.
    pub atoms: CMat,
    /// Per-column (angle, distance) pairs; distance `INFINITY` marks the
    /// far-field ring.
    pub grid: Vec<(f64, f64)>,
    /// Angle grid sines, uniform on [-1, 1).
    pub angle_sines: Vec<f64>,
    /// Near-field ring radii in meters, decreasing.
    pub ring_radii: Vec<f64>,
}

impl PolarDictionary {
    /// Rings per angle, counting the far-field ring.
    pub fn rings_per_angle(&self) -> usize {
        self.ring_radii.len() + 1
    }

    /// Column index for an (angle index, ring index) pair; ring 0 is the
    /// far-field ring, ring s >= 1 selects `ring_radii[s - 1]`.
    pub fn column_index(&self, angle_idx: usize, ring_idx: usize) -> usize {
        angle_idx * self.rings_per_angle() + ring_idx
    }
}

fn check_array_args(n: usize, spacing: f64, wavelength: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("array size must be >= 1"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid("element spacing must be positive"));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::invalid("wavelength must be positive"));
    }
    Ok(())
}

/// Uncentered steering vector from a sine-domain value: entry `i` is
/// `exp(j 2 pi (spacing / wavelength) i s)`.
pub fn steering_from_sine(n: usize, spacing: f64, wavelength: f64, sine: f64) -> CVec {
    let step = 2.0 * std::f64::consts::PI * spacing / wavelength * sine;
    CVec::from_fn(n, |i, _| Cplx::from_polar(1.0, step * i as f64))
}

/// Centered variant: entry `i` is phased by the offset from the array
/// midpoint, `(i - (n - 1) / 2) * spacing`.
pub fn centered_steering_from_sine(n: usize, spacing: f64, wavelength: f64, sine: f64) -> CVec {
    let step = 2.0 * std::f64::consts::PI * spacing / wavelength * sine;
    let mid = (n as f64 - 1.0) / 2.0;
    CVec::from_fn(n, |i, _| Cplx::from_polar(1.0, step * (i as f64 - mid)))
}

/// Far-field steering vector of an `n`-element ULA toward `angle`.
pub fn far_field_steering(n: usize, spacing: f64, wavelength: f64, angle: f64) -> Result<CVec> {
    check_array_args(n, spacing, wavelength)?;
    if !angle.is_finite() {
        return Err(Error::invalid("steering angle must be finite"));
    }
    Ok(steering_from_sine(n, spacing, wavelength, angle.sin()))
}

/// Element offsets from the array midpoint, `(i - (m - 1) / 2) * spacing`.
fn centered_offsets(m: usize, spacing: f64) -> impl Iterator<Item = f64> {
    let mid = (m as f64 - 1.0) / 2.0;
    (0..m).map(move |i| (i as f64 - mid) * spacing)
}

/// Near-field (spherical-wave) steering vector of an `m`-element ULA for a
/// source at `angle` and `distance` from the array midpoint.
///
/// Entry `i` is `exp(-j 2 pi (r_i - distance) / wavelength)` with `r_i` the
/// exact element-to-source distance. An infinite distance degrades to the
/// centered far-field vector.
pub fn near_field_steering(
    m: usize,
    spacing: f64,
    wavelength: f64,
    angle: f64,
    distance: f64,
) -> Result<CVec> {
    check_array_args(m, spacing, wavelength)?;
    if !angle.is_finite() {
        return Err(Error::invalid("steering angle must be finite"));
    }
    if !(distance > 0.0) {
        return Err(Error::invalid("near-field distance must be positive"));
    }
    if distance.is_infinite() {
        return Ok(centered_steering_from_sine(
            m,
            spacing,
            wavelength,
            angle.sin(),
        ));
    }
    let sin_a = angle.sin();
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let entries: Vec<Cplx> = centered_offsets(m, spacing)
        .map(|d| {
            let r_elem = (distance * distance + d * d - 2.0 * distance * d * sin_a).sqrt();
            Cplx::from_polar(1.0, -k * (r_elem - distance))
        })
        .collect();
    Ok(CVec::from_vec(entries))
}

/// Rayleigh distance `2 aperture^2 / wavelength`, the conventional near/far
/// field boundary.
pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> Result<f64> {
    if !(aperture > 0.0 && wavelength > 0.0) {
        return Err(Error::invalid("aperture and wavelength must be positive"));
    }
    Ok(2.0 * aperture * aperture / wavelength)
}

/// Physical aperture of an `m`-element ULA.
pub fn aperture(m: usize, spacing: f64) -> f64 {
    (m.saturating_sub(1)) as f64 * spacing
}

fn uniform_sine_grid(d_size: usize) -> Vec<f64> {
    (0..d_size)
        .map(|g| -1.0 + 2.0 * g as f64 / d_size as f64)
        .collect()
}

/// Builds an overcomplete far-field dictionary with `d_size` atoms whose
/// sines sample [-1, 1) uniformly.
pub fn build_angular_dictionary(
    n: usize,
    d_size: usize,
    spacing: f64,
    wavelength: f64,
) -> Result<AngularDictionary> {
    check_array_args(n, spacing, wavelength)?;
    if d_size < n {
        return Err(Error::invalid(format!(
            "angular dictionary must be overcomplete: d_size {d_size} < n {n}"
        )));
    }
    let grid_sines = uniform_sine_grid(d_size);
    let mut atoms = CMat::zeros(n, d_size);
    for (g, &s) in grid_sines.iter().enumerate() {
        atoms.set_column(g, &steering_from_sine(n, spacing, wavelength, s));
    }
    let grid_angles = grid_sines.iter().map(|s| s.asin()).collect();
    Ok(AngularDictionary {
        atoms,
        grid_angles,
        grid_sines,
    })
}

/// Near-field ring radii `aperture^2 / (2 wavelength beta_delta^2 s)` for
/// s = 1, 2, ..., truncated below `min_distance`.
pub fn polar_ring_radii(
    m: usize,
    spacing: f64,
    wavelength: f64,
    beta_delta: f64,
    min_distance: f64,
) -> Vec<f64> {
    let ap = aperture(m, spacing);
    let scale = ap * ap / (2.0 * wavelength * beta_delta * beta_delta);
    let mut radii = Vec::new();
    let mut s = 1.0;
    loop {
        let r = scale / s;
        if r < min_distance || !r.is_finite() || r <= 0.0 {
            break;
        }
        radii.push(r);
        s += 1.0;
    }
    radii
}

/// Builds the joint angle/distance dictionary: `angle_count` sine-uniform
/// angles, each with one far-field ring plus every near-field ring whose
/// radius stays above `min_distance`.
///
/// Passing `min_distance = INFINITY` yields a far-field-only dictionary over
/// the RIS aperture, which is how the far-field baseline estimator is built.
pub fn build_polar_dictionary(
    m: usize,
    spacing: f64,
    wavelength: f64,
    angle_count: usize,
    beta_delta: f64,
    min_distance: f64,
) -> Result<PolarDictionary> {
    check_array_args(m, spacing, wavelength)?;
    if angle_count < m {
        return Err(Error::invalid(format!(
            "polar dictionary must be overcomplete in angle: angle_count {angle_count} < m {m}"
        )));
    }
    if !(beta_delta > 0.0) {
        return Err(Error::invalid("beta_delta must be positive"));
    }
    let ring_radii = if min_distance.is_finite() {
        polar_ring_radii(m, spacing, wavelength, beta_delta, min_distance)
    } else {
        Vec::new()
    };
    let angle_sines = uniform_sine_grid(angle_count);
    let rings = ring_radii.len() + 1;
    let mut atoms = CMat::zeros(m, angle_count * rings);
    let mut grid = Vec::with_capacity(angle_count * rings);
    for (g, &s) in angle_sines.iter().enumerate() {
        let angle = s.asin();
        atoms.set_column(
            g * rings,
            &centered_steering_from_sine(m, spacing, wavelength, s),
        );
        grid.push((angle, f64::INFINITY));
        for (ri, &r) in ring_radii.iter().enumerate() {
            let col = near_field_steering(m, spacing, wavelength, angle, r)?;
            atoms.set_column(g * rings + ri + 1, &col);
            grid.push((angle, r));
        }
    }
    Ok(PolarDictionary {
        atoms,
        grid,
        angle_sines,
        ring_radii,
    })
}

/// How scenario parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Angles and distances drawn from their continuous distributions.
    Continuous,
    /// Angles and distances snapped onto the estimation grids so that
    /// noiseless recovery is exact; BS-side and RIS-side angles land on
    /// distinct DFT bins and user branches on distinct dictionary atoms.
    OnGrid,
}

/// Dictionaries shared by the sampler (for on-grid snapping) and the
/// estimator.
#[derive(Debug, Clone)]
pub struct DictionarySet {
    pub user: AngularDictionary,
    pub polar: PolarDictionary,
}

/// Complex Gaussian draw, `CN(0, var)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Cplx {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cplx::new(s * re, s * im)
}

/// Signed DFT-bin sines of an `n`-element array: `(wavelength / spacing) *
/// psi_b` with `psi_b = b/n` folded into [-1/2, 1/2), kept only while the
/// sine stays physical.
fn dft_bin_sines(n: usize, spacing: f64, wavelength: f64) -> Vec<f64> {
    (0..n)
        .map(|b| {
            let mut psi = b as f64 / n as f64;
            if psi >= 0.5 {
                psi -= 1.0;
            }
            psi * wavelength / spacing
        })
        .filter(|s| s.abs() <= 1.0)
        .collect()
}

fn draw_distinct<R: Rng + ?Sized>(rng: &mut R, pool: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool).collect();
    let count = count.min(pool);
    let (picked, _) = idx.partial_shuffle(rng, count);
    picked.to_vec()
}

/// Draws `count` indices with pairwise separation at least `min_sep`
/// (cyclically when `cyclic` is set), uniformly over the valid sorted
/// configurations via the gap bijection; falls back to plain distinct
/// draws when no valid configuration exists. Grid atoms one step apart are
/// strongly coherent, and the atom midway between two supports one bin
/// apart correlates with both, so validation scenarios plant
/// well-separated supports.
fn draw_separated<R: Rng + ?Sized>(
    rng: &mut R,
    pool: usize,
    count: usize,
    min_sep: usize,
    cyclic: bool,
) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![rng.random_range(0..pool)];
    }
    let needed = if cyclic {
        count * min_sep
    } else {
        (count - 1) * min_sep + 1
    };
    if pool < needed {
        return draw_distinct(rng, pool, count);
    }
    // x_i = sort(y)_i + i * min_sep maps non-decreasing y over
    // 0..=pool-1-(count-1)*min_sep onto exactly the sorted valid sets; the
    // cyclic wrap gap is enforced by rejection.
    let slack = pool - 1 - (count - 1) * min_sep;
    for _ in 0..200 {
        let mut y: Vec<usize> = (0..count).map(|_| rng.random_range(0..=slack)).collect();
        y.sort_unstable();
        let mut x: Vec<usize> = y
            .iter()
            .enumerate()
            .map(|(i, &v)| v + i * min_sep)
            .collect();
        if cyclic && (x[0] + pool) - x[count - 1] < min_sep {
            continue;
        }
        x.shuffle(rng);
        return x;
    }
    draw_distinct(rng, pool, count)
}

/// Assembles the BS-RIS channel from its paths.
pub fn assemble_h_br(cfg: &SystemConfig, paths: &[FarFieldPath]) -> CMat {
    let lam = cfg.wavelength();
    let mut h = CMat::zeros(cfg.n_bs, cfg.m_ris);
    for p in paths {
        let a_bs = steering_from_sine(cfg.n_bs, cfg.spacing_bs, lam, p.bs_angle.sin());
        let a_ris = steering_from_sine(cfg.m_ris, cfg.spacing_ris, lam, p.ris_angle.sin());
        h += (&a_bs * a_ris.adjoint()) * p.gain;
    }
    h
}

/// Assembles one user's RIS-user channel from its paths.
pub fn assemble_h_ru(cfg: &SystemConfig, paths: &[NearFieldPath]) -> CMat {
    let lam = cfg.wavelength();
    let mut h = CMat::zeros(cfg.m_ris, cfg.n_ue);
    for p in paths {
        let b = near_field_steering(cfg.m_ris, cfg.spacing_ris, lam, p.ris_angle, p.distance)
            .expect("stored path parameters are valid");
        let a_ue = steering_from_sine(cfg.n_ue, cfg.spacing_ue, lam, p.ue_angle.sin());
        h += (&b * a_ue.adjoint()) * p.gain;
    }
    h
}

/// Cascaded channel for one receive antenna: `h_br * Diag(h_ru_col)`.
pub fn cascade(h_br: &CMat, h_ru_col: &CVec) -> CMat {
    let mut g = h_br.clone();
    for (m, hv) in h_ru_col.iter().enumerate() {
        g.column_mut(m).scale_mut(1.0);
        for r in 0..g.nrows() {
            g[(r, m)] = h_br[(r, m)] * hv;
        }
    }
    g
}

/// Builds a channel set from explicit path lists.
pub fn channels_from_paths(
    cfg: &SystemConfig,
    paths_br: Vec<FarFieldPath>,
    paths_ru: Vec<Vec<NearFieldPath>>,
) -> ChannelSet {
    let h_br = assemble_h_br(cfg, &paths_br);
    let h_ru: Vec<CMat> = paths_ru.iter().map(|p| assemble_h_ru(cfg, p)).collect();
    let g_true = h_ru
        .iter()
        .map(|hr| {
            (0..cfg.n_ue)
                .map(|n| cascade(&h_br, &CVec::from_column_slice(hr.column(n).as_slice())))
                .collect()
        })
        .collect();
    ChannelSet {
        h_br,
        h_ru,
        paths_br,
        paths_ru,
        g_true,
    }
}

/// Draws one channel realization.
///
/// BS-RIS gains follow `CN(0, 1e-3 * d_br^-e0)`, RIS-user gains
/// `CN(0, 1e-3 * r^-e1)` with the path's own distance `r` drawn uniformly
/// from the configured interval. In [`SamplingMode::OnGrid`] all angles and
/// distances are snapped onto `dicts`' grids (and onto the BS/RIS DFT bins)
/// with branch supports drawn without replacement, so every planted
/// parameter is exactly representable by the estimator.
pub fn sample_scenario<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    mode: SamplingMode,
    dicts: Option<&DictionarySet>,
    rng: &mut R,
) -> Result<ChannelSet> {
    cfg.validate()?;
    let lam = cfg.wavelength();
    let (e_br, e_ru) = cfg.gain_exponents;
    let var_br = 1e-3 * cfg.dist_bs_ris.powf(-e_br);

    let paths_br = match mode {
        SamplingMode::Continuous => (0..cfg.n_bs_paths)
            .map(|_| {
                let gain = complex_gaussian(rng, var_br);
                let bs_angle = rng.random::<f64>() * std::f64::consts::PI;
                let ris_angle = rng.random::<f64>() * std::f64::consts::PI;
                FarFieldPath {
                    gain,
                    bs_angle,
                    ris_angle,
                }
            })
            .collect::<Vec<_>>(),
        SamplingMode::OnGrid => {
            let bs_sines = dft_bin_sines(cfg.n_bs, cfg.spacing_bs, lam);
            let ris_sines = dft_bin_sines(cfg.m_ris, cfg.spacing_ris, lam);
            let bs_pick = draw_separated(rng, bs_sines.len(), cfg.n_bs_paths, 2, true);
            let ris_pick = draw_separated(rng, ris_sines.len(), cfg.n_bs_paths, 2, true);
            bs_pick
                .iter()
                .zip(ris_pick.iter())
                .map(|(&bi, &ri)| FarFieldPath {
                    gain: complex_gaussian(rng, var_br),
                    bs_angle: bs_sines[bi].asin(),
                    ris_angle: ris_sines[ri].asin(),
                })
                .collect()
        }
    };

    let mut paths_ru = Vec::with_capacity(cfg.n_users);
    for k in 0..cfg.n_users {
        let j_k = cfg.n_ue_paths[k];
        let paths = match mode {
            SamplingMode::Continuous => (0..j_k)
                .map(|_| {
                    let r = cfg.dist_ris_ue.0
                        + rng.random::<f64>() * (cfg.dist_ris_ue.1 - cfg.dist_ris_ue.0);
                    let gain = complex_gaussian(rng, 1e-3 * r.powf(-e_ru));
                    NearFieldPath {
                        gain,
                        ris_angle: rng.random::<f64>() * std::f64::consts::PI,
                        ue_angle: rng.random::<f64>() * std::f64::consts::PI,
                        distance: r,
                    }
                })
                .collect::<Vec<_>>(),
            SamplingMode::OnGrid => {
                let dicts = dicts.ok_or_else(|| {
                    Error::invalid("on-grid sampling requires the dictionary set")
                })?;
                let polar = &dicts.polar;
                // Two bins of separation keeps greedy user-support
                // recovery exact: half-bin neighbours of a pair correlate
                // with both members, one-bin midpoints are again on-bin.
                // Sine grids wrap at half-wavelength spacing, so the
                // separation is cyclic.
                let ue_pick = draw_separated(rng, dicts.user.grid_sines.len(), j_k, 4, true);
                let ang_pick = draw_separated(rng, polar.angle_sines.len(), j_k, 2, true);
                // Prefer rings inside the configured distance interval, then
                // any near-field ring, then the far-field ring.
                let in_range: Vec<usize> = polar
                    .ring_radii
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r >= cfg.dist_ris_ue.0 && r <= cfg.dist_ris_ue.1)
                    .map(|(i, _)| i)
                    .collect();
                (0..j_k)
                    .map(|j| {
                        let draw_r = cfg.dist_ris_ue.0
                            + rng.random::<f64>() * (cfg.dist_ris_ue.1 - cfg.dist_ris_ue.0);
                        let dist = if !in_range.is_empty() {
                            polar.ring_radii[in_range[rng.random_range(0..in_range.len())]]
                        } else if !polar.ring_radii.is_empty() {
                            polar.ring_radii[rng.random_range(0..polar.ring_radii.len())]
                        } else {
                            f64::INFINITY
                        };
                        let gain_dist = if dist.is_finite() { dist } else { draw_r };
                        NearFieldPath {
                            gain: complex_gaussian(rng, 1e-3 * gain_dist.powf(-e_ru)),
                            ris_angle: polar.angle_sines[ang_pick[j]].asin(),
                            ue_angle: dicts.user.grid_sines[ue_pick[j]].asin(),
                            distance: dist,
                        }
                    })
                    .collect()
            }
        };
        paths_ru.push(paths);
    }

    Ok(channels_from_paths(cfg, paths_br, paths_ru))
}

impl ChannelSet {
    /// Largest relative reconstruction error between the stored matrices and
    /// matrices rebuilt from the stored path parameters.
    pub fn reconstruction_error(&self, cfg: &SystemConfig) -> f64 {
        let mut worst = rel_err(&assemble_h_br(cfg, &self.paths_br), &self.h_br);
        for (k, paths) in self.paths_ru.iter().enumerate() {
            worst = worst.max(rel_err(&assemble_h_ru(cfg, paths), &self.h_ru[k]));
        }
        worst
    }
}
