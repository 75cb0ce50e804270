//! Subordinator paths, subordinated Brownian increments, the degenerate
//! temperature forcing and the renewal stopping times.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_integer::Integer;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;
use crate::spectral::{sigma_state, ModeIndex, PhysicsParams, SpectralState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubordinatorFamily {
    /// Gamma process sampled exactly on a grid.
    Gamma,
    /// Compound Poisson with the Gamma Lévy density truncated to `[ε, ∞)`.
    TruncatedGamma,
}

/// Lévy measure `a e^{-bu} / u du` (Gamma family) and sampling knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubordinatorSpec {
    pub family: SubordinatorFamily,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub grid_step: f64,
}

impl Default for SubordinatorSpec {
    fn default() -> Self {
        Self {
            family: SubordinatorFamily::Gamma,
            a: 1.0,
            b: 1.0,
            epsilon: 1e-6,
            grid_step: 1e-3,
        }
    }
}

impl SubordinatorSpec {
    pub fn gamma(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(invalid("a", "shape a must be positive"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(invalid("b", "rate b must be positive"));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(invalid("grid_step", "grid_step must be positive"));
        }
        if self.family == SubordinatorFamily::TruncatedGamma && !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "truncated family needs epsilon > 0"));
        }
        Ok(())
    }

    /// `E[ℓ_t] = a t / b`.
    pub fn mean_rate(&self) -> f64 {
        self.a / self.b
    }

    /// `E[e^{ζ ℓ_t}] = (b / (b - ζ))^{a t}` for `ζ < b`.
    pub fn exp_moment(&self, zeta: f64, t: f64) -> Option<f64> {
        (zeta < self.b).then(|| (self.b / (self.b - zeta)).powf(self.a * t))
    }
}

/// Pure-jump nondecreasing path: `ℓ_t = Σ_{t_i ≤ t} Δℓ_i` on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubordinatorPath {
    horizon: f64,
    times: Vec<f64>,
    sizes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SubordinatorPath {
    /// Builds a path from sorted jump times in `(0, T]` and positive sizes.
    pub fn from_jumps(horizon: f64, jumps: Vec<(f64, f64)>) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(invalid("horizon", "must be nonnegative"));
        }
        let mut times = Vec::with_capacity(jumps.len());
        let mut sizes = Vec::with_capacity(jumps.len());
        let mut cumulative = Vec::with_capacity(jumps.len());
        let mut acc = 0.0;
        let mut last = 0.0;
        for (t, dl) in jumps {
            if !(t > 0.0 && t <= horizon && t >= last) {
                return Err(invalid("jumps", format!("jump time {t} out of order or range")));
            }
            if !(dl > 0.0 && dl.is_finite()) {
                return Err(invalid("jumps", format!("jump size {dl} must be positive")));
            }
            acc += dl;
            last = t;
            times.push(t);
            sizes.push(dl);
            cumulative.push(acc);
        }
        Ok(Self {
            horizon,
            times,
            sizes,
            cumulative,
        })
    }

    pub fn zero(horizon: f64) -> Self {
        Self::from_jumps(horizon, Vec::new()).expect("empty path")
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.sizes.iter().copied())
    }

    /// Right-continuous evaluation `ℓ_t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Jumps with `s < t_i ≤ t`.
    pub fn jumps_in(&self, s: f64, t: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let lo = self.times.partition_point(|&x| x <= s);
        let hi = self.times.partition_point(|&x| x <= t);
        self.times[lo..hi]
            .iter()
            .copied()
            .zip(self.sizes[lo..hi].iter().copied())
    }

    /// SHA-256 of the little-endian jump list, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.horizon.to_le_bytes());
        for (t, s) in self.jumps() {
            h.update(t.to_le_bytes());
            h.update(s.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Columnar export `time,jump,ell` preceded by `#` header lines.
    /// Floats are written in shortest round-trip form so import is exact.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        spec: &SubordinatorSpec,
        seed: u64,
        config_digest: &str,
    ) -> Result<()> {
        let mut head = String::new();
        writeln!(head, "# config_digest={config_digest}").ok();
        writeln!(
            head,
            "# family={:?} a={} b={} epsilon={} grid_step={}",
            spec.family, spec.a, spec.b, spec.epsilon, spec.grid_step
        )
        .ok();
        writeln!(
            head,
            "# seed={seed} horizon={} path_digest={}",
            self.horizon,
            self.digest()
        )
        .ok();
        out.write_all(head.as_bytes())?;
        writeln!(out, "time,jump,ell")?;
        for i in 0..self.len() {
            writeln!(out, "{:?},{:?},{:?}", self.times[i], self.sizes[i], self.cumulative[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut horizon = None;
        let mut jumps = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("horizon=") {
                        horizon = Some(parse_f64(v, lineno + 1)?);
                    }
                }
                continue;
            }
            if line.starts_with("time") || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 columns", lineno + 1)));
            }
            jumps.push((parse_f64(cols[0], lineno + 1)?, parse_f64(cols[1], lineno + 1)?));
        }
        let horizon = horizon.ok_or_else(|| Error::Format("missing horizon header".into()))?;
        Self::from_jumps(horizon, jumps)
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad number {s:?}")))
}

/// Samples `ℓ` on `[0, T]`.
///
/// Gamma family: independent `Gamma(a h, 1/b)` increments over grid cells of
/// width `h`, each booked as a jump at the right cell endpoint (zero
/// increments dropped). Truncated family: compound Poisson with rate
/// `a E1(bε)` and jump law `∝ e^{-bu}/u` on `[ε, ∞)`.
pub fn sample_subordinator(spec: &SubordinatorSpec, horizon: f64, rng: &mut StreamRng) -> Result<SubordinatorPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("T", "horizon must be positive"));
    }
    spec.validate()?;
    let mut jumps = Vec::new();
    match spec.family {
        SubordinatorFamily::Gamma => {
            let h = spec.grid_step;
            let cells = (horizon / h - 1e-9).ceil().max(1.0) as usize;
            for i in 1..=cells {
                let t = if i == cells { horizon } else { i as f64 * h };
                let width = t - (i - 1) as f64 * h;
                let g = Gamma::new(spec.a * width, 1.0 / spec.b).map_err(|e| invalid("a", e.to_string()))?;
                let x: f64 = g.sample(rng);
                if x > 0.0 {
                    jumps.push((t, x));
                }
            }
        }
        SubordinatorFamily::TruncatedGamma => {
            let rate = spec.a * exp_integral_e1(spec.b * spec.epsilon);
            let count: f64 = Poisson::new(rate * horizon)
                .map_err(|e| invalid("a", e.to_string()))?
                .sample(rng);
            let exp = Exp::new(spec.b).map_err(|e| invalid("b", e.to_string()))?;
            let mut times: Vec<f64> = (0..count as usize)
                .map(|_| horizon * (1.0 - rng.random::<f64>()))
                .collect();
            times.sort_by(f64::total_cmp);
            for t in times {
                let size = loop {
                    let u = spec.epsilon + exp.sample(rng);
                    if rng.random::<f64>() * u <= spec.epsilon {
                        break u;
                    }
                };
                jumps.push((t, size));
            }
        }
    }
    SubordinatorPath::from_jumps(horizon, jumps)
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x < 1.0 {
        // power series
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -0.577_215_664_901_532_9 - x.ln() + sum
    } else {
        // continued fraction (modified Lentz)
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// One jump of the subordinated Brownian motion `W_{ℓ_t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyIncrement {
    pub time: f64,
    pub dell: f64,
    pub dw: Vec<f64>,
}

/// `ΔW_i ~ N(0, Δℓ_i I_d)` independently for every jump of the path.
pub fn subordinated_increments(path: &SubordinatorPath, d: usize, rng: &mut StreamRng) -> Result<Vec<LevyIncrement>> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    Ok(path
        .jumps()
        .map(|(time, dell)| {
            let sd = dell.sqrt();
            let dw = (0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
            LevyIncrement { time, dell, dw }
        })
        .collect())
}

/// SHA-256 over the increment stream.
pub fn increments_digest(incs: &[LevyIncrement]) -> String {
    let mut h = Sha256::new();
    for inc in incs {
        h.update(inc.time.to_le_bytes());
        h.update(inc.dell.to_le_bytes());
        for x in &inc.dw {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Forcing set `𝒵` with amplitudes `α_k^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    modes: Vec<ModeIndex>,
    alpha: Vec<[f64; 2]>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::uniform(vec![ModeIndex::new(1, 0), ModeIndex::new(0, 1)], 1.0).expect("valid")
    }
}

impl NoiseModel {
    pub fn new(modes: Vec<ModeIndex>, alpha: Vec<[f64; 2]>) -> Result<Self> {
        if modes.len() != alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: modes.len(),
                got: alpha.len(),
            });
        }
        if modes.is_empty() {
            return Err(invalid("modes", "forcing set must be nonempty"));
        }
        if modes.iter().any(|k| k.is_zero()) {
            return Err(invalid("modes", "forcing set contains the zero mode"));
        }
        for (i, k) in modes.iter().enumerate() {
            if modes[..i].iter().any(|j| j.canonical().0 == k.canonical().0) {
                return Err(invalid("modes", format!("{k} repeats a forced mode up to sign")));
            }
        }
        if alpha.iter().flatten().any(|a| *a == 0.0 || !a.is_finite()) {
            return Err(invalid("alpha", "amplitudes must be finite and nonzero"));
        }
        Ok(Self { modes, alpha })
    }

    pub fn uniform(modes: Vec<ModeIndex>, amplitude: f64) -> Result<Self> {
        let alpha = vec![[amplitude; 2]; modes.len()];
        Self::new(modes, alpha)
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn alpha(&self, i: usize, m: usize) -> f64 {
        self.alpha[i][m]
    }

    pub fn amplitudes(&self) -> &[[f64; 2]] {
        &self.alpha
    }

    /// `d = 2 |𝒵|`; `dW` component `2 i + m` drives `σ_{k_i}^m`.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    /// `B0 = Σ (α_k^m)²`.
    pub fn b0(&self) -> f64 {
        self.alpha.iter().flatten().map(|a| a * a).sum()
    }

    /// `(k, m, α_k^m)` in `dW` order.
    pub fn directions(&self) -> impl Iterator<Item = (ModeIndex, u8, f64)> + '_ {
        self.modes
            .iter()
            .zip(&self.alpha)
            .flat_map(|(&k, a)| [(k, 0u8, a[0]), (k, 1u8, a[1])])
    }

    /// `Σ α_k^m σ_k^m dW^{k,m}`; the vorticity slot stays identically zero.
    pub fn forcing_increment(&self, n: usize, dw: &[f64]) -> Result<SpectralState> {
        if dw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: dw.len(),
            });
        }
        let cutoff = ((n.max(1) - 1) / 3) as i32;
        let mut out = SpectralState::zeros(n);
        for (i, (k, m, a)) in self.directions().enumerate() {
            if k.k1.abs() > cutoff || k.k2.abs() > cutoff {
                return Err(invalid("modes", format!("{k} not resolved at grid size {n}")));
            }
            if dw[i] != 0.0 {
                out.axpy(a * dw[i], &sigma_state(n, k, m));
            }
        }
        Ok(out)
    }
}

/// Per-clause outcome of the forcing-set admissibility check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Condition21Report {
    pub symmetric: bool,
    pub generator: bool,
    pub non_parallel_pair: bool,
    pub distinct_moduli_pair: bool,
    pub diagnostic: String,
}

impl Condition21Report {
    /// Symmetric generator with two non-parallel vectors. The distinct-moduli
    /// clause is reported but not gating, since `{(1,0),(0,1)}` must pass.
    pub fn passes(&self) -> bool {
        self.symmetric && self.generator && self.non_parallel_pair
    }
}

pub fn check_condition_2_1(z: &[ModeIndex]) -> Condition21Report {
    let mut closed: Vec<ModeIndex> = Vec::new();
    for &k in z.iter().filter(|k| !k.is_zero()) {
        for v in [k, -k] {
            if !closed.contains(&v) {
                closed.push(v);
            }
        }
    }
    let symmetric = !closed.is_empty() && closed.iter().all(|k| closed.contains(&-*k));

    let mut g: i64 = 0;
    for (i, a) in closed.iter().enumerate() {
        for b in &closed[i + 1..] {
            let minor = a.k1 as i64 * b.k2 as i64 - a.k2 as i64 * b.k1 as i64;
            g = g.gcd(&minor);
        }
    }
    let generator = g == 1;

    let mut non_parallel_pair = false;
    let mut distinct_moduli_pair = false;
    for (i, a) in closed.iter().enumerate() {
        for b in &closed[i + 1..] {
            let minor = a.k1 as i64 * b.k2 as i64 - a.k2 as i64 * b.k1 as i64;
            if minor != 0 {
                non_parallel_pair = true;
                if a.norm_sq() != b.norm_sq() {
                    distinct_moduli_pair = true;
                }
            }
        }
    }

    let mut diagnostic = String::new();
    if !symmetric {
        diagnostic.push_str("empty or zero-only forcing set; ");
    }
    if !generator {
        let _ = write!(diagnostic, "lattice index {g} (need 1); ");
    }
    if !non_parallel_pair {
        diagnostic.push_str("all vectors parallel; ");
    }
    if !distinct_moduli_pair {
        diagnostic.push_str("no non-parallel pair with distinct moduli; ");
    }
    Condition21Report {
        symmetric,
        generator,
        non_parallel_pair,
        distinct_moduli_pair,
        diagnostic: diagnostic.trim_end_matches("; ").to_string(),
    }
}

/// Renewal times `η_n` of `νt - 8 B0 κ ℓ_t` crossing level 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingTimes {
    pub kappa: f64,
    pub nu: f64,
    pub b0: f64,
    pub eta: Vec<f64>,
    /// Horizon exhausted before `n_max` times were found.
    pub truncated: bool,
}

impl StoppingTimes {
    /// Slope of the noise clock, `8 B0 κ`.
    pub fn clock_weight(&self) -> f64 {
        8.0 * self.b0 * self.kappa
    }

    /// `ν(η_n - η_{n-1}) - 8 B0 κ (ℓ_{η_n} - ℓ_{η_{n-1}})` for each `n`.
    pub fn increments(&self, path: &SubordinatorPath) -> Vec<f64> {
        let c = self.clock_weight();
        let mut prev = 0.0;
        self.eta
            .iter()
            .map(|&e| {
                let v = self.nu * (e - prev) - c * (path.value_at(e) - path.value_at(prev));
                prev = e;
                v
            })
            .collect()
    }
}

/// Scans the path forward. Between jumps the process `νt - cℓ_t` is linear,
/// so each `η_n` is the exact time the current segment reaches 1.
pub fn stopping_times(
    path: &SubordinatorPath,
    p: &PhysicsParams,
    model: &NoiseModel,
    kappa: f64,
    n_max: usize,
) -> Result<StoppingTimes> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa", "kappa must be nonnegative"));
    }
    let nu = p.nu();
    let b0 = model.b0();
    let c = 8.0 * b0 * kappa;
    let times = path.jump_times();
    let sizes = path.jump_sizes();
    let mut eta = Vec::with_capacity(n_max);
    let mut start = 0.0;
    let mut next = 0usize;
    let mut truncated = false;
    while eta.len() < n_max {
        while next < times.len() && times[next] <= start {
            next += 1;
        }
        let mut acc = 0.0;
        let found = loop {
            let cand = start + (1.0 + c * acc) / nu;
            let bound = times.get(next).copied().unwrap_or(f64::INFINITY);
            if cand < bound {
                break (cand <= path.horizon()).then_some(cand);
            }
            acc += sizes[next];
            next += 1;
        };
        match found {
            Some(t) => {
                eta.push(t);
                start = t;
            }
            None => {
                truncated = true;
                break;
            }
        }
    }
    Ok(StoppingTimes {
        kappa,
        nu,
        b0,
        eta,
        truncated,
    })
}

/// Closed form of `E[e^{q η_1}]` when `ℓ` is a Gamma(a, b) subordinator:
/// `e^{-Φ(-q)}` with `Φ` the right inverse of the Laplace exponent
/// `ψ(λ) = νλ - a ln(1 + cλ/b)` of `νt - cℓ_t`. `None` when infinite.
pub fn gamma_exp_moment(nu: f64, c: f64, a: f64, b: f64, q: f64) -> Option<f64> {
    if c == 0.0 {
        return Some((q / nu).exp());
    }
    let psi = |l: f64| nu * l - a * (1.0 + c * l / b).ln();
    let l_min = a / nu - b / c;
    if l_min >= 0.0 || psi(l_min) > -q {
        return None;
    }
    let (mut lo, mut hi) = (l_min, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > -q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((-0.5 * (lo + hi)).exp())
}

/// Largest `κ` keeping `E[e^{q η}]` finite for a Gamma(a, b) subordinator.
pub fn gamma_kappa_limit(nu: f64, b0: f64, a: f64, b: f64, q: f64) -> f64 {
    // finite iff q ≤ νb/c - a + a ln(ac/(νb)); bisect in c
    let ok = |c: f64| gamma_exp_moment(nu, c, a, b, q).is_some();
    let (mut lo, mut hi) = (0.0, 1.0);
    while ok(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo / (8.0 * b0)
}
