use serde::Serialize;

use super::{
    bracket_y, bracket_z, bracket_z_sigma, direction_state, numerical_lie_bracket, prop52_step, psi_recovery,
    ratio_to_f64, PsiBranch, VectorField, E1,
};
use crate::error::Result;
use crate::spectral::{psi_state, sigma_state, ModeIndex, PhysicsParams, Spectral, SpectralState};

/// Largest discrepancy of one symbolic identity against the numerical
/// bracket, relative to `1 + max|·|`.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub case: String,
    pub max_error: f64,
}

const FD_EPS: f64 = 1e-3;

/// Mode pairs `(j, k)` exercised by the checks.
pub const CHECK_PAIRS: [((i32, i32), (i32, i32)); 5] = [
    ((0, 1), (1, 0)),
    ((1, 0), (0, 1)),
    ((1, 1), (1, 0)),
    ((2, -1), (0, 1)),
    ((1, 2), (1, -1)),
];

fn rel(a: &SpectralState, b: &SpectralState) -> f64 {
    a.plus(-1.0, b).max_abs() / (1.0 + a.max_abs().max(b.max_abs()))
}

fn rel_w(a: &SpectralState, b: &SpectralState) -> f64 {
    let mut d = a.w.clone();
    d.axpy(-1.0, &b.w);
    d.max_abs() / (1.0 + a.w.max_abs().max(b.w.max_abs()))
}

fn z_sigma(
    spec: &Spectral,
    p: &PhysicsParams,
    j: ModeIndex,
    m: u8,
    k: ModeIndex,
    mp: u8,
    u: &SpectralState,
) -> Result<SpectralState> {
    let z = |v: &SpectralState| bracket_z(spec, p, j, m, v);
    let s = sigma_state(spec.resolution(), k, mp);
    let c = |_: &SpectralState| -> Result<SpectralState> { Ok(s.clone()) };
    numerical_lie_bracket(&z as &VectorField, &c as &VectorField, u, FD_EPS)
}

/// Checks the bracket formula, the four pure-direction combinations and
/// both vorticity recoveries at `U = 0` (full vector) and at `u` (vorticity
/// part, plus affinity of the temperature remainder).
pub fn validate_identities(
    spec: &Spectral,
    p: &PhysicsParams,
    u: &SpectralState,
    u2: &SpectralState,
) -> Result<Vec<IdentityCheck>> {
    let n = spec.resolution();
    let zero = spec.zero_state();
    let u12 = u.plus(1.0, u2);
    let mut out = Vec::new();

    for ((j1, j2), (k1, k2)) in CHECK_PAIRS {
        let (j, k) = (ModeIndex::new(j1, j2), ModeIndex::new(k1, k2));
        let mut at0: f64 = 0.0;
        let mut at_u: f64 = 0.0;
        let mut affine: f64 = 0.0;
        for m in 0..2 {
            for mp in 0..2 {
                let sym = direction_state(n, &bracket_z_sigma(j, m, k, mp)?, p.g);
                let h0 = z_sigma(spec, p, j, m, k, mp, &zero)?;
                at0 = at0.max(rel(&h0, &sym));
                let ha = z_sigma(spec, p, j, m, k, mp, u)?;
                let hb = z_sigma(spec, p, j, m, k, mp, u2)?;
                let hab = z_sigma(spec, p, j, m, k, mp, &u12)?;
                at_u = at_u.max(rel_w(&ha, &sym));
                let mut second = hab.plus(1.0, &h0);
                second.axpy(-1.0, &ha);
                second.axpy(-1.0, &hb);
                affine = affine.max(second.max_abs() / (1.0 + hab.max_abs()));
            }
        }
        out.push(IdentityCheck {
            identity: "z_sigma_bracket".into(),
            case: format!("j={j} k={k} U=0"),
            max_error: at0,
        });
        out.push(IdentityCheck {
            identity: "z_sigma_bracket".into(),
            case: format!("j={j} k={k} U random, vorticity"),
            max_error: at_u,
        });
        out.push(IdentityCheck {
            identity: "z_sigma_remainder_affine".into(),
            case: format!("j={j} k={k}"),
            max_error: affine,
        });

        for d in prop52_step(j, k)? {
            let target = direction_state(n, &d.direction(), p.g);
            let mut errs = [0.0f64; 2];
            for (slot, base) in [&zero, u].into_iter().enumerate() {
                let mut acc = spec.zero_state();
                for &(m, mp, c) in &d.combination {
                    acc.axpy(c as f64, &z_sigma(spec, p, j, m, k, mp, base)?);
                }
                errs[slot] = if slot == 0 {
                    rel(&acc, &target)
                } else {
                    rel_w(&acc, &target)
                };
            }
            let case = format!("j={j} k={k} {:?} parity {}", d.shift, d.parity);
            out.push(IdentityCheck {
                identity: "pure_direction".into(),
                case: format!("{case} U=0"),
                max_error: errs[0],
            });
            out.push(IdentityCheck {
                identity: "pure_direction".into(),
                case: format!("{case} U random, vorticity"),
                max_error: errs[1],
            });
        }
    }

    for (j, m) in [((1, 0), 0u8), ((1, 0), 1), ((2, -1), 0), ((1, 3), 1)] {
        let j = ModeIndex::new(j.0, j.1);
        let d = psi_recovery(j, m)?;
        let PsiBranch::DirectY { factor, y_parity } = d.branch else {
            unreachable!("j1 != 0")
        };
        let c = ratio_to_f64(factor) / p.g;
        let mut err: f64 = 0.0;
        for base in [&zero, u] {
            let rhs = bracket_y(spec, p, j, y_parity, base)?.scaled(c);
            let s = sigma_state(n, j, y_parity);
            let mut lhs = psi_state(n, j, m);
            lhs.axpy(c * p.nu2 * j.norm_sq() as f64, &s);
            lhs.axpy(c, &spec.nonlinear(base, &s)?);
            err = err.max(rel(&lhs, &rhs));
        }
        out.push(IdentityCheck {
            identity: "psi_recovery_direct".into(),
            case: format!("j={j} m={m}"),
            max_error: err,
        });
    }

    for j2 in 1..=3 {
        let j = ModeIndex::new(0, j2);
        for m in 0..2u8 {
            let d = psi_recovery(j, m)?;
            let PsiBranch::AxisBracket {
                z_mode,
                combination,
                factor,
            } = d.branch
            else {
                unreachable!("j1 == 0")
            };
            let mut err: f64 = 0.0;
            for base in [&zero, u] {
                let mut c_m = spec.zero_state();
                for &(mz, my, c) in &combination {
                    let z = |v: &SpectralState| bracket_z(spec, p, z_mode, mz, v);
                    let y = |v: &SpectralState| bracket_y(spec, p, E1, my, v);
                    c_m.axpy(
                        c as f64,
                        &numerical_lie_bracket(&z as &VectorField, &y as &VectorField, base, FD_EPS)?,
                    );
                }
                let recovered = c_m.scaled(ratio_to_f64(factor) / (p.g * p.g));
                err = err.max(rel_w(&recovered, &psi_state(n, j, m)));
            }
            out.push(IdentityCheck {
                identity: "psi_recovery_axis".into(),
                case: format!("j={j} m={m}"),
                max_error: err,
            });
        }
    }
    Ok(out)
}
