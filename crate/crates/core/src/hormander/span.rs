use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use num_traits::Zero;
use serde::Serialize;

use super::{prop52_step, psi_recovery, BasisSymbol, Prop52Direction, PsiDerivation, SymbolSlot};
use crate::error::{invalid, Error, Result};
use crate::noise::check_condition_2_1;
use crate::spectral::ModeIndex;

/// `I_N = {j in the half lattice : |j|₁ ≤ N+1}` minus the axis modes at
/// distance `N` and `N+1`.
pub fn induction_set(big_n: u32) -> Vec<ModeIndex> {
    let r = big_n as i32 + 1;
    let excluded = [
        ModeIndex::new(0, r),
        ModeIndex::new(0, r - 1),
        ModeIndex::new(r, 0),
        ModeIndex::new(r - 1, 0),
    ];
    let mut out = Vec::new();
    for k1 in 0..=r {
        for k2 in -r..=r {
            let k = ModeIndex::new(k1, k2);
            if k.is_canonical() && k.l1() <= r && !excluded.contains(&k) {
                out.push(k);
            }
        }
    }
    out.sort_by_key(|k| (k.l1(), k.k1, k.k2));
    out
}

/// `I_1` is exactly `{(1,1), (-1,1)}` (the latter stored as `(1,-1)`).
pub fn check_i1() -> bool {
    let mut got = induction_set(1);
    got.sort();
    got == vec![ModeIndex::new(1, -1), ModeIndex::new(1, 1)]
}

#[derive(Clone, Debug, Serialize)]
pub enum Rule {
    /// Directly forced direction `σ_k^m`, `k ∈ 𝒵`.
    Forced,
    /// Pure direction from brackets `[Z_j^m, σ_k^{m'}]`.
    Bracket {
        j: ModeIndex,
        k: ModeIndex,
        step: Prop52Direction,
    },
    /// Vorticity direction recovered modulo a temperature-only affine term.
    Psi(PsiDerivation),
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivationEntry {
    pub index: usize,
    pub symbol: BasisSymbol,
    pub rule: Rule,
    pub parents: Vec<BasisSymbol>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpanState {
    pub big_n: u32,
    pub forcing: Vec<ModeIndex>,
    pub induction_set: Vec<ModeIndex>,
    pub entries: Vec<DerivationEntry>,
    /// Symbols over `I_N` that were not reached.
    pub missing: Vec<BasisSymbol>,
}

impl SpanState {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn reached(&self, sym: &BasisSymbol) -> bool {
        self.entries.iter().any(|e| &e.symbol == sym)
    }

    /// Checks every derivation against freshly computed identities, in order.
    pub fn replay(&self) -> Result<()> {
        let mut seen: BTreeSet<BasisSymbol> = BTreeSet::new();
        let forced: BTreeSet<ModeIndex> = self.forcing.iter().map(|k| k.canonical().0).collect();
        for e in &self.entries {
            let fail = |why: String| invalid("derivation", format!("#{}: {why}", e.index));
            if seen.contains(&e.symbol) {
                return Err(fail(format!("{} derived twice", e.symbol)));
            }
            if let Some(p) = e.parents.iter().find(|p| !seen.contains(p)) {
                return Err(fail(format!("parent {p} not derived earlier")));
            }
            match &e.rule {
                Rule::Forced => {
                    if e.symbol.slot != SymbolSlot::Sigma || !forced.contains(&e.symbol.mode) {
                        return Err(fail(format!("{} is not forced", e.symbol)));
                    }
                }
                Rule::Bracket { j, k, step } => {
                    let fresh = prop52_step(*j, *k)?
                        .into_iter()
                        .find(|d| d.shift == step.shift && d.parity == step.parity)
                        .expect("four directions");
                    if fresh.target != e.symbol || fresh.prefactor != step.prefactor {
                        return Err(fail("recorded step does not match recomputation".into()));
                    }
                    if fresh.prefactor.is_zero() {
                        return Err(fail("zero prefactor".into()));
                    }
                    if fresh.evaluate_combination(*j, *k)? != fresh.direction() {
                        return Err(fail("bracket combination is not the pure direction".into()));
                    }
                }
                Rule::Psi(d) => {
                    let fresh = psi_recovery(e.symbol.mode, e.symbol.parity)?;
                    if fresh.target != e.symbol || fresh.branch != d.branch || fresh.requires != e.parents {
                        return Err(fail("recorded vorticity recovery does not match".into()));
                    }
                }
            }
            seen.insert(e.symbol);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// One line per derivation.
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let how = match &e.rule {
                Rule::Forced => "forced".to_string(),
                Rule::Bracket { j, k, step } => format!(
                    "[Z_{j}, sigma_{k}] combination {:?}, prefactor g*{}",
                    step.combination, step.prefactor
                ),
                Rule::Psi(d) => format!("{:?}", d.branch),
            };
            let parents: Vec<String> = e.parents.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(
                s,
                "#{:<4} {:<18} <- {how} from [{}]",
                e.index,
                e.symbol.to_string(),
                parents.join(", ")
            );
        }
        s
    }
}

/// Breadth-first closure of the forced directions under the bracket
/// recipes, restricted to `|j|₁ ≤ N+1`, followed by vorticity recovery.
pub fn span_generation(forcing: &[ModeIndex], big_n: u32) -> Result<SpanState> {
    if big_n == 0 {
        return Err(invalid("N", "N must be at least 1"));
    }
    let report = check_condition_2_1(forcing);
    if !report.passes() {
        return Err(invalid(
            "forcing",
            format!("forcing set rejected: {}", report.diagnostic),
        ));
    }
    let bound = big_n as i32 + 1;
    let forced: Vec<ModeIndex> = forcing.iter().map(|k| k.canonical().0).collect();

    let mut entries: Vec<DerivationEntry> = Vec::new();
    let push = |entries: &mut Vec<DerivationEntry>, symbol, rule, parents| {
        entries.push(DerivationEntry {
            index: entries.len(),
            symbol,
            rule,
            parents,
        });
    };

    let mut queue: VecDeque<ModeIndex> = VecDeque::new();
    let mut queued: BTreeSet<ModeIndex> = BTreeSet::new();
    for &k in &forced {
        for m in 0..2 {
            push(&mut entries, BasisSymbol::sigma(k, m), Rule::Forced, Vec::new());
        }
        if queued.insert(k) {
            queue.push_back(k);
        }
    }
    let has = |entries: &Vec<DerivationEntry>, s: &BasisSymbol| entries.iter().any(|e| &e.symbol == s);

    while let Some(j) = queue.pop_front() {
        for &k in &forced {
            for step in prop52_step(j, k)? {
                if !step.reachable() || step.target.mode.l1() > bound || has(&entries, &step.target) {
                    continue;
                }
                let parents = vec![
                    BasisSymbol::sigma(j, 0),
                    BasisSymbol::sigma(j, 1),
                    BasisSymbol::sigma(k, 0),
                    BasisSymbol::sigma(k, 1),
                ];
                let target = step.target;
                push(&mut entries, target, Rule::Bracket { j, k, step }, parents);
                if queued.insert(target.mode) {
                    queue.push_back(target.mode);
                }
            }
        }
    }

    let mut candidates: Vec<ModeIndex> = Vec::new();
    for k1 in 0..=bound {
        for k2 in -bound..=bound {
            let k = ModeIndex::new(k1, k2);
            if k.is_canonical() && k.l1() <= bound {
                candidates.push(k);
            }
        }
    }
    candidates.sort_by_key(|k| (k.l1(), k.k1, k.k2));
    for j in candidates {
        for m in 0..2 {
            let d = psi_recovery(j, m)?;
            if d.requires.iter().all(|r| has(&entries, r)) {
                let parents = d.requires.clone();
                push(&mut entries, d.target, Rule::Psi(d), parents);
            }
        }
    }

    let set = induction_set(big_n);
    let mut missing = Vec::new();
    for &j in &set {
        for m in 0..2 {
            for sym in [BasisSymbol::sigma(j, m), BasisSymbol::psi(j, m)] {
                if !has(&entries, &sym) {
                    missing.push(sym);
                }
            }
        }
    }
    Ok(SpanState {
        big_n,
        forcing: forcing.to_vec(),
        induction_set: set,
        entries,
        missing,
    })
}
