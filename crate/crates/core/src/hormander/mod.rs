//! Bracket algebra of the forcing directions on Fourier modes.
//!
//! Directions are exact rational combinations of the trigonometric vectors
//! `σ_k^m = (0, trig_m(k·x))` and `ψ_k^m = (trig_m(k·x), 0)`, `trig_0 = cos`,
//! `trig_1 = sin`, over canonical modes. The velocity convention is the one
//! fixed by `∂x u2 - ∂y u1 = w` (see [`crate::spectral::Spectral::biot_savart`]).

mod numeric;
mod span;
mod validate;

pub use numeric::{bracket_y, bracket_z, direction_state, numerical_lie_bracket, symbol_state, VectorField};
pub use span::{check_i1, induction_set, span_generation, DerivationEntry, Rule, SpanState};
pub use validate::{validate_identities, IdentityCheck, CHECK_PAIRS};

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::spectral::ModeIndex;

pub type Rational = Rational64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SymbolSlot {
    /// Temperature component.
    Sigma,
    /// Vorticity component.
    Psi,
}

/// `σ_k^m` or `ψ_k^m` with `k` in the canonical half lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BasisSymbol {
    pub slot: SymbolSlot,
    pub mode: ModeIndex,
    pub parity: u8,
}

impl BasisSymbol {
    /// Canonical symbol for `(slot, k, m mod 2)` and the sign picked up by
    /// `cos(-x) = cos x`, `sin(-x) = -sin x`.
    pub fn canonical(slot: SymbolSlot, k: ModeIndex, parity: u8) -> (Self, i64) {
        let parity = parity % 2;
        let (mode, flipped) = k.canonical();
        let sign = if flipped && parity == 1 { -1 } else { 1 };
        (Self { slot, mode, parity }, sign)
    }

    pub fn sigma(k: ModeIndex, parity: u8) -> Self {
        Self::canonical(SymbolSlot::Sigma, k, parity).0
    }

    pub fn psi(k: ModeIndex, parity: u8) -> Self {
        Self::canonical(SymbolSlot::Psi, k, parity).0
    }
}

impl fmt::Display for BasisSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.slot {
            SymbolSlot::Sigma => "sigma",
            SymbolSlot::Psi => "psi",
        };
        write!(f, "{s}^{}_{}", self.parity, self.mode)
    }
}

/// Finite rational combination of basis symbols times `g^{g_power}`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BracketDirection {
    pub g_power: i32,
    pub terms: BTreeMap<BasisSymbol, Rational>,
}

impl Serialize for BracketDirection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms: BTreeMap<String, String> = self.terms.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut m = BTreeMap::new();
        m.insert("g_power", serde_json::to_value(self.g_power).expect("int"));
        m.insert("terms", serde_json::to_value(terms).expect("map"));
        m.serialize(s)
    }
}

impl BracketDirection {
    pub fn zero(g_power: i32) -> Self {
        Self {
            g_power,
            terms: BTreeMap::new(),
        }
    }

    /// `c · g^{g_power} · trig` for a possibly non-canonical mode.
    pub fn single(slot: SymbolSlot, k: ModeIndex, parity: u8, coeff: Rational, g_power: i32) -> Self {
        let mut d = Self::zero(g_power);
        d.add_term(slot, k, parity, coeff);
        d
    }

    pub fn add_term(&mut self, slot: SymbolSlot, k: ModeIndex, parity: u8, coeff: Rational) {
        if k.is_zero() || coeff.is_zero() {
            // the constant mode is not in the mean-zero phase space
            return;
        }
        let (sym, sign) = BasisSymbol::canonical(slot, k, parity);
        let e = self.terms.entry(sym).or_insert_with(Rational::zero);
        *e += coeff * Rational::from_integer(sign);
        if e.is_zero() {
            self.terms.remove(&sym);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, c: Rational) -> Self {
        let mut out = Self::zero(self.g_power);
        if !c.is_zero() {
            for (k, v) in &self.terms {
                out.terms.insert(*k, *v * c);
            }
        }
        out
    }

    /// `self + other`; both must carry the same power of `g`.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.g_power != other.g_power && !self.is_zero() && !other.is_zero() {
            return Err(invalid("g_power", "cannot add directions with different powers of g"));
        }
        let mut out = self.clone();
        if self.is_zero() {
            out.g_power = other.g_power;
        }
        for (k, v) in &other.terms {
            let e = out.terms.entry(*k).or_insert_with(Rational::zero);
            *e += *v;
            if e.is_zero() {
                out.terms.remove(k);
            }
        }
        Ok(out)
    }

    pub fn coefficient(&self, sym: &BasisSymbol) -> Rational {
        self.terms.get(sym).copied().unwrap_or_else(Rational::zero)
    }
}

fn check_nonzero(k: ModeIndex) -> Result<()> {
    if k.is_zero() {
        Err(invalid("mode", "zero mode"))
    } else {
        Ok(())
    }
}

/// `a(j, k) = j1/|j|² + k1/|k|²`.
pub fn coeff_a(j: ModeIndex, k: ModeIndex) -> Result<Rational> {
    check_nonzero(j)?;
    check_nonzero(k)?;
    Ok(Rational::new(j.k1 as i64, j.norm_sq()) + Rational::new(k.k1 as i64, k.norm_sq()))
}

/// `b(j, k) = j1/|j|² - k1/|k|²`.
pub fn coeff_b(j: ModeIndex, k: ModeIndex) -> Result<Rational> {
    check_nonzero(j)?;
    check_nonzero(k)?;
    Ok(Rational::new(j.k1 as i64, j.norm_sq()) - Rational::new(k.k1 as i64, k.norm_sq()))
}

/// `j^⊥ · k` with `j^⊥ = (-j2, j1)`.
pub fn perp_dot(j: ModeIndex, k: ModeIndex) -> i64 {
    j.perp().dot(&k)
}

/// Overall sign between the printed bracket formula and the bracket of the
/// implemented vector fields. Under `∂x u2 - ∂y u1 = w` the two differ by a
/// global factor `-1`, fixed by comparison with the numerical oracle.
pub const K03_CONVENTION_SIGN: i64 = -1;

/// The printed right-hand side
/// `g(-1)^{(m+1)(m'+1)} (j^⊥·k)/2 [(-1)^{m'} b(j,k) σ_{j-k}^{m+m'+1} - a(j,k) σ_{j+k}^{m+m'+1}]`.
pub fn k03_printed(j: ModeIndex, m: u8, k: ModeIndex, mp: u8) -> Result<BracketDirection> {
    let a = coeff_a(j, k)?;
    let b = coeff_b(j, k)?;
    let (m, mp) = (m % 2, mp % 2);
    let sign = if ((m + 1) * (mp + 1)) % 2 == 0 { 1 } else { -1 };
    let half = Rational::new(sign * perp_dot(j, k), 2);
    let p = (m + mp + 1) % 2;
    let sb = if mp == 0 { 1 } else { -1 };
    let mut d = BracketDirection::zero(1);
    d.add_term(SymbolSlot::Sigma, j - k, p, half * b * Rational::from_integer(sb));
    d.add_term(SymbolSlot::Sigma, j + k, p, -half * a);
    Ok(d)
}

/// U-independent part of `[Z_j^m(U), σ_k^{m'}]`. The remainder is an affine,
/// temperature-only field of `U`.
pub fn bracket_z_sigma(j: ModeIndex, m: u8, k: ModeIndex, mp: u8) -> Result<BracketDirection> {
    Ok(k03_printed(j, m, k, mp)?.scaled(Rational::from_integer(K03_CONVENTION_SIGN)))
}

/// Which pure direction a combination of `[Z_j^m, σ_k^{m'}]` isolates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Shift {
    Plus,
    Minus,
}

/// One pure direction `prefactor · σ_{j±k}^p` as a combination of brackets.
#[derive(Clone, Debug, Serialize)]
pub struct Prop52Direction {
    pub shift: Shift,
    pub parity: u8,
    /// Mode `j ± k` before canonicalisation.
    pub raw_mode: ModeIndex,
    pub target: BasisSymbol,
    /// `(j^⊥·k) a(j,k)` or `(j^⊥·k) b(j,k)`; the full prefactor is `g` times this.
    #[serde(serialize_with = "ser_ratio")]
    pub prefactor: Rational,
    /// Coefficients `c_{m m'}` with `Σ c_{m m'} [Z_j^m, σ_k^{m'}] = prefactor g σ_{j±k}^p` up to
    /// temperature-only affine terms.
    pub combination: Vec<(u8, u8, i64)>,
}

fn ser_ratio<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl Prop52Direction {
    pub fn reachable(&self) -> bool {
        !self.prefactor.is_zero()
    }

    /// Pure direction as a bracket direction (`g^1` times the prefactor).
    pub fn direction(&self) -> BracketDirection {
        BracketDirection::single(SymbolSlot::Sigma, self.raw_mode, self.parity, self.prefactor, 1)
    }

    /// Evaluates the stated combination of [`bracket_z_sigma`] outputs.
    pub fn evaluate_combination(&self, j: ModeIndex, k: ModeIndex) -> Result<BracketDirection> {
        let mut acc = BracketDirection::zero(1);
        for &(m, mp, c) in &self.combination {
            acc = acc.plus(&bracket_z_sigma(j, m, k, mp)?.scaled(Rational::from_integer(c)))?;
        }
        Ok(acc)
    }
}

/// The four pure directions `σ_{j+k}^0, σ_{j+k}^1, σ_{j-k}^0, σ_{j-k}^1`:
///
/// ```text
/// g d a σ_{j+k}^0 = -K_{01} - K_{10}      g d b σ_{j-k}^0 = K_{10} - K_{01}
/// g d a σ_{j+k}^1 =  K_{00} - K_{11}      g d b σ_{j-k}^1 = -K_{00} - K_{11}
/// ```
///
/// with `K_{mm'}` the printed bracket formula and `d = j^⊥·k`. The stored
/// combinations act on the implemented brackets, hence carry the
/// convention sign.
pub fn prop52_step(j: ModeIndex, k: ModeIndex) -> Result<[Prop52Direction; 4]> {
    let d = Rational::from_integer(perp_dot(j, k));
    let a = coeff_a(j, k)?;
    let b = coeff_b(j, k)?;
    let s = K03_CONVENTION_SIGN;
    let make = |shift, parity, pref, comb: [(u8, u8, i64); 2]| {
        let raw_mode = match shift {
            Shift::Plus => j + k,
            Shift::Minus => j - k,
        };
        Prop52Direction {
            shift,
            parity,
            raw_mode,
            target: BasisSymbol::sigma(raw_mode, parity),
            prefactor: pref,
            combination: comb.iter().map(|&(m, mp, c)| (m, mp, c * s)).collect(),
        }
    };
    Ok([
        make(Shift::Plus, 0, d * a, [(0, 1, -1), (1, 0, -1)]),
        make(Shift::Plus, 1, d * a, [(0, 0, 1), (1, 1, -1)]),
        make(Shift::Minus, 0, d * b, [(1, 0, 1), (0, 1, -1)]),
        make(Shift::Minus, 1, d * b, [(0, 0, -1), (1, 1, -1)]),
    ])
}

/// How `ψ_j^m` is recovered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PsiBranch {
    /// `j1 ≠ 0`: `ψ_j^m + J = ((-1)^{m+1} / (g j1)) Y_j^{m+1}` with
    /// `J = ((-1)^{m+1}/(g j1)) (ν2 |j|² σ_j^{m+1} + B(U, σ_j^{m+1}))`.
    DirectY {
        #[serde(serialize_with = "ser_ratio")]
        factor: Rational,
        y_parity: u8,
    },
    /// `j1 = 0`: with `j' = j + e1`,
    /// `C_0 = -[Z_{j'}^0, Y_{e1}^0] - [Z_{j'}^1, Y_{e1}^1]`,
    /// `C_1 = [Z_{j'}^1, Y_{e1}^0] - [Z_{j'}^0, Y_{e1}^1]`, whose vorticity
    /// part is `s_m g² |j|³ / (1 + |j|²) ψ_j^m`, `s_0 = -1`, `s_1 = 1`;
    /// `ψ_j^m + J = factor g^{-2} C_m` with `J` temperature-only.
    AxisBracket {
        z_mode: ModeIndex,
        /// `(m_Z, m_Y, c)` terms of `C_m`.
        combination: Vec<(u8, u8, i64)>,
        #[serde(serialize_with = "ser_ratio")]
        factor: Rational,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiDerivation {
    pub target: BasisSymbol,
    pub branch: PsiBranch,
    /// σ symbols whose brackets enter the identity.
    pub requires: Vec<BasisSymbol>,
    /// The error term `J_{j,m}(U)` is affine in `U` and temperature-only.
    pub error_theta_only_affine: bool,
}

pub const E1: ModeIndex = ModeIndex::new(1, 0);

/// Sign `s_m` of the vorticity part of `C_m` in the axis branch.
pub fn axis_sign(m: u8) -> i64 {
    if m % 2 == 0 {
        -1
    } else {
        1
    }
}

pub fn axis_combination(m: u8) -> Vec<(u8, u8, i64)> {
    if m % 2 == 0 {
        vec![(0, 0, -1), (1, 1, -1)]
    } else {
        vec![(1, 0, 1), (0, 1, -1)]
    }
}

pub fn psi_recovery(j: ModeIndex, m: u8) -> Result<PsiDerivation> {
    if !j.is_canonical() {
        return Err(invalid("j", format!("{j} is not in the canonical half lattice")));
    }
    let m = m % 2;
    let target = BasisSymbol::psi(j, m);
    if j.k1 != 0 {
        let sign = if m == 0 { -1 } else { 1 };
        Ok(PsiDerivation {
            target,
            branch: PsiBranch::DirectY {
                factor: Rational::new(sign, j.k1 as i64),
                y_parity: (m + 1) % 2,
            },
            requires: vec![BasisSymbol::sigma(j, (m + 1) % 2)],
            error_theta_only_affine: true,
        })
    } else {
        let n = j.k2 as i64;
        let z_mode = j + E1;
        Ok(PsiDerivation {
            target,
            branch: PsiBranch::AxisBracket {
                z_mode,
                combination: axis_combination(m),
                factor: Rational::new(axis_sign(m) * (1 + n * n), n * n * n),
            },
            requires: vec![
                BasisSymbol::sigma(z_mode, 0),
                BasisSymbol::sigma(z_mode, 1),
                BasisSymbol::sigma(E1, 0),
                BasisSymbol::sigma(E1, 1),
            ],
            error_theta_only_affine: true,
        })
    }
}

/// Rational as `f64`.
pub fn ratio_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
