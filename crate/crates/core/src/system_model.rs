//! Array geometry, radiation-center (RC) selection and the dimension-extended
//! channel.
//!
//! Candidate RC points sit on a uniform linear array with spacing `d_p`
//! (in wavelengths). A selection picks exactly `n_t` of the `n_em` points with
//! at most one pick inside every window of `D_min = ceil(1 / (2 d_p))`
//! consecutive points, which keeps selected RCs at least half a wavelength
//! apart. Indices are 1-based throughout the public API.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CMat, CVec, Error, Result};

/// Analog network topology between RF chains and antenna ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnalogStructure {
    /// Every RF chain drives every port through its own phase shifter.
    FullyConnected,
    /// Ports are split into `K` equal blocks, one per RF chain.
    PartiallyConnected,
    /// One RF chain per port, no phase shifters.
    FullyDigital,
}

impl AnalogStructure {
    pub fn short_name(self) -> &'static str {
        match self {
            AnalogStructure::FullyConnected => "FC",
            AnalogStructure::PartiallyConnected => "PC",
            AnalogStructure::FullyDigital => "FD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Selectable RC candidate points.
    pub n_em: usize,
    /// Antenna ports, i.e. RCs that are selected.
    pub n_t: usize,
    /// RF chains.
    pub n_rf: usize,
    pub k_users: usize,
    /// Candidate spacing in wavelengths.
    pub d_p: f64,
    /// Noise power in mW.
    pub noise_power: f64,
    /// Transmit power budget in mW.
    pub p_max: f64,
    pub analog_structure: AnalogStructure,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::standard()
    }
}

impl SystemConfig {
    /// Default simulation setup: 80 candidates at λ/10, 8 ports, 4 users,
    /// 10 dBm noise and a 30 dBm budget.
    pub fn standard() -> Self {
        SystemConfig {
            n_em: 80,
            n_t: 8,
            n_rf: 4,
            k_users: 4,
            d_p: 0.1,
            noise_power: crate::dbm_to_mw(10.0),
            p_max: crate::dbm_to_mw(30.0),
            analog_structure: AnalogStructure::FullyConnected,
        }
    }

    pub fn with_structure(mut self, structure: AnalogStructure) -> Self {
        self.analog_structure = structure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_users == 0 || self.n_rf == 0 || self.n_t == 0 || self.n_em == 0 {
            return Err(Error::Config("all counts must be positive".into()));
        }
        if self.k_users != self.n_rf {
            return Err(Error::Config(format!(
                "k_users ({}) must equal n_rf ({})",
                self.k_users, self.n_rf
            )));
        }
        if !(self.n_rf <= self.n_t && self.n_t <= self.n_em) {
            return Err(Error::Config(format!(
                "require n_rf <= n_t <= n_em, got {} / {} / {}",
                self.n_rf, self.n_t, self.n_em
            )));
        }
        if !(self.d_p.is_finite() && self.d_p > 0.0) {
            return Err(Error::Config(format!("d_p must be positive, got {}", self.d_p)));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::Config("noise power must be positive".into()));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::Config("p_max must be positive".into()));
        }
        if self.analog_structure == AnalogStructure::PartiallyConnected
            && self.n_t % self.k_users != 0
        {
            return Err(Error::Config(format!(
                "partially connected structure needs k_users | n_t, got n_t = {}, k = {}",
                self.n_t, self.k_users
            )));
        }
        Ok(())
    }

    /// Minimum index spacing between two selected RCs.
    pub fn d_min(&self) -> usize {
        // 1 / (2 * 0.1) evaluates to 5.000000000000001 in floating point.
        let raw = 1.0 / (2.0 * self.d_p);
        ((raw - 1e-9).ceil() as usize).max(1)
    }

    /// Ports per RF chain in the partially connected network.
    pub fn n_s(&self) -> usize {
        self.n_t / self.k_users
    }
}

/// Which feasibility constraint a selection vector breaks first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Binary,
    PortCount,
    Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible(Violation),
}

impl Feasibility {
    pub fn is_feasible(self) -> bool {
        self == Feasibility::Feasible
    }
}

/// Checks the binary, port-count and sliding-window spacing constraints in
/// that order and reports the first one that fails.
pub fn check_feasible(r: &[u8], config: &SystemConfig) -> Result<Feasibility> {
    if r.len() != config.n_em {
        return Err(Error::Dimension(format!(
            "selection vector has length {}, expected n_em = {}",
            r.len(),
            config.n_em
        )));
    }
    if r.iter().any(|&v| v > 1) {
        return Ok(Feasibility::Infeasible(Violation::Binary));
    }
    let count: usize = r.iter().map(|&v| v as usize).sum();
    if count != config.n_t {
        return Ok(Feasibility::Infeasible(Violation::PortCount));
    }
    let window = config.d_min().min(config.n_em);
    let crowded = r
        .windows(window)
        .any(|w| w.iter().map(|&v| v as usize).sum::<usize>() > 1);
    if crowded {
        return Ok(Feasibility::Infeasible(Violation::Spacing));
    }
    Ok(Feasibility::Feasible)
}

/// A feasible RC selection, held both as the binary vector `r` and as the
/// sorted 1-based index set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RcSelection {
    index_set: Vec<usize>,
    r: Vec<u8>,
}

impl RcSelection {
    /// Builds a selection from 1-based indices (any order). Fails if the
    /// result is not feasible for `config`.
    pub fn from_indices(indices: &[usize], config: &SystemConfig) -> Result<Self> {
        let mut r = vec![0u8; config.n_em];
        for &x in indices {
            if x == 0 || x > config.n_em {
                return Err(Error::Dimension(format!(
                    "index {x} outside 1..={}",
                    config.n_em
                )));
            }
            r[x - 1] += 1;
        }
        Self::from_binary(r, config)
    }

    pub fn from_binary(r: Vec<u8>, config: &SystemConfig) -> Result<Self> {
        match check_feasible(&r, config)? {
            Feasibility::Feasible => {
                let index_set = r
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(i, _)| i + 1)
                    .collect();
                Ok(RcSelection { index_set, r })
            }
            Feasibility::Infeasible(v) => Err(Error::Infeasible(v)),
        }
    }

    /// Sorted 1-based indices of the selected RCs.
    pub fn indices(&self) -> &[usize] {
        &self.index_set
    }

    pub fn r(&self) -> &[u8] {
        &self.r
    }

    pub fn n_em(&self) -> usize {
        self.r.len()
    }
}

impl std::fmt::Display for RcSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.index_set.iter().map(|x| x.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Normalized ULA response: entry `m` is `exp(j 2π d m sinθ) / √n` with the
/// spacing `d` in wavelengths.
pub fn steering_vector(n: usize, theta: f64, d: f64) -> CVec {
    let scale = 1.0 / (n as f64).sqrt();
    let phase_step = 2.0 * PI * d * theta.sin();
    CVec::from_fn(n, |m, _| Complex64::from_polar(scale, phase_step * m as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    /// Angle of departure in radians.
    pub angle: f64,
}

/// Channel from every candidate RC to every user (`n_em x k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedChannel {
    pub h_bar: CMat,
    pub paths: Vec<Vec<PathParams>>,
}

impl ExtendedChannel {
    /// Assembles `h̄_k = √(n_em / L_k) Σ_l β_l α(n_em, θ_l, d_p)` for each user.
    pub fn from_paths(n_em: usize, d_p: f64, paths: Vec<Vec<PathParams>>) -> Result<Self> {
        if paths.iter().any(|p| p.is_empty()) {
            return Err(Error::Config("every user needs at least one path".into()));
        }
        let mut h_bar = CMat::zeros(n_em, paths.len());
        for (k, user_paths) in paths.iter().enumerate() {
            let scale = (n_em as f64 / user_paths.len() as f64).sqrt();
            let mut col = CVec::zeros(n_em);
            for p in user_paths {
                col += steering_vector(n_em, p.angle, d_p) * p.gain;
            }
            h_bar.set_column(k, &(col * Complex64::from(scale)));
        }
        Ok(ExtendedChannel { h_bar, paths })
    }

    pub fn n_em(&self) -> usize {
        self.h_bar.nrows()
    }

    pub fn k_users(&self) -> usize {
        self.h_bar.ncols()
    }

    /// Short content hash of `h̄`, used to show that paired architectures saw
    /// the same realization.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.h_bar.nrows() as u64).to_le_bytes());
        hasher.update((self.h_bar.ncols() as u64).to_le_bytes());
        for z in self.h_bar.iter() {
            hasher.update(z.re.to_bits().to_le_bytes());
            hasher.update(z.im.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Draws a Saleh-Valenzuela style channel with `l_paths` paths per user:
/// gains `CN(0, 1)`, angles uniform on `(-π/2, π/2)`.
pub fn generate_extended_channel(
    config: &SystemConfig,
    l_paths: usize,
    rng_seed: u64,
) -> Result<ExtendedChannel> {
    if l_paths == 0 {
        return Err(Error::Config("l_paths must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let paths = (0..config.k_users)
        .map(|_| {
            (0..l_paths)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let angle = rng.random_range(-PI / 2.0..PI / 2.0);
                    PathParams {
                        gain: Complex64::new(re * half, im * half),
                        angle,
                    }
                })
                .collect()
        })
        .collect();
    ExtendedChannel::from_paths(config.n_em, config.d_p, paths)
}

/// Effective `n_t x k` channel: the rows of `h̄` picked by the selection.
pub fn apply_selection(
    channel: &ExtendedChannel,
    sel: &RcSelection,
    config: &SystemConfig,
) -> Result<CMat> {
    if channel.n_em() != config.n_em {
        return Err(Error::Dimension(format!(
            "channel has {} rows, config expects n_em = {}",
            channel.n_em(),
            config.n_em
        )));
    }
    if let Feasibility::Infeasible(v) = check_feasible(sel.r(), config)? {
        return Err(Error::Infeasible(v));
    }
    let rows: Vec<usize> = sel.indices().iter().map(|x| x - 1).collect();
    Ok(channel.h_bar.select_rows(rows.iter()))
}

/// Fixed-position baseline: `n_t` RCs on a half-wavelength grid starting at
/// the first candidate.
pub fn fpa_baseline_selection(config: &SystemConfig) -> Result<RcSelection> {
    let d_min = config.d_min();
    let span = (config.n_t - 1) * d_min + 1;
    if span > config.n_em {
        return Err(Error::Config(format!(
            "array of {} candidates cannot host {} ports at spacing {}",
            config.n_em, config.n_t, d_min
        )));
    }
    let indices: Vec<usize> = (0..config.n_t).map(|m| 1 + m * d_min).collect();
    RcSelection::from_indices(&indices, config)
}
