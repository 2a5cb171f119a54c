//! Key-rate bounds for finite-alphabet channels: achievable rate, converse
//! bound, secret-message rate, symmetric-CSI capacity and the masking-only
//! special case.
//!
//! The achievable rate maximizes I(U;Y_r) − I(U;Y_e) over auxiliary policies
//! (p(u|s), p(x|u,s)) subject to I(U;Y_r) ≥ I(U;S). The converse minimizes
//! max_{p(x|s)} I(X,S;Y_r|Y_e) over couplings of the two output marginals.
//! These objectives are nonconcave differences of mutual informations, so the
//! optimizers are multi-start projected-gradient ascent with seeded restarts,
//! plus an exhaustive grid mode for binary alphabets that serves as an
//! independent oracle. Returned values are certified one-sided: achievable
//! policies are re-evaluated exactly, and any fixed coupling upper-bounds the
//! converse minimum.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{AuxiliaryPolicy, StateWiretapChannel};
use crate::error::{Error, Result};
use crate::prob::{binary_entropy, entropy_slice, xlog2x, Kernel, ProbVector};
use crate::rng::stream_rng;
use rand::Rng;

/// Feasibility slack on I(U;Y_r) − I(U;S).
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Tolerance on coupling marginals against the channel's.
pub const COUPLING_MARGINAL_TOL: f64 = 1e-7;

const CONSTRAINT_PENALTY: f64 = 8.0;

/// A rate value with its named term breakdown. The rate always equals the
/// stated combination of the terms.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rate: f64,
    pub feasible: bool,
    pub terms: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RateReport {
    fn new(rate: f64, feasible: bool, terms: &[(&str, f64)]) -> Self {
        RateReport {
            rate,
            feasible,
            terms: terms
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            notes: Vec::new(),
        }
    }

    fn with_note(mut self, note: &str) -> Self {
        self.notes.push(note.to_string());
        self
    }
}

/// Optimizer knobs shared by all bound maximizations.
#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    /// Independent seeded restarts of the gradient ascent.
    pub restarts: usize,
    pub max_iters: usize,
    /// Initial ascent step on the simplex parameters.
    pub initial_step: f64,
    /// Grid pitch of the exhaustive mode.
    pub grid_step: f64,
    pub seed: u64,
    /// Convergence: stop when the best value improves by less than this many
    /// bits over `patience` iterations.
    pub tol_bits: f64,
    pub patience: usize,
    /// Auxiliary alphabet size; defaults to |S|(1+|X|).
    pub u_size: Option<usize>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            restarts: 64,
            max_iters: 300,
            initial_step: 0.25,
            grid_step: 0.02,
            seed: 0,
            tol_bits: 1e-6,
            patience: 50,
            u_size: None,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0
            || self.max_iters == 0
            || self.patience == 0
            || !(self.initial_step > 0.0)
            || !(self.grid_step > 0.0 && self.grid_step <= 1.0)
            || !(self.tol_bits > 0.0)
        {
            return Err(Error::config("optimizer options must all be positive"));
        }
        Ok(())
    }

    fn u_size_for(&self, ch: &StateWiretapChannel) -> usize {
        self.u_size
            .unwrap_or_else(|| AuxiliaryPolicy::default_u_size(ch.ns(), ch.nx()))
            .max(1)
    }
}

/// Which bound is being maximized over auxiliary policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// I(U;Y_r) − I(U;Y_e) subject to I(U;Y_r) ≥ I(U;S).
    LowerBound,
    /// I(U;Y_r) − max(I(U;S), I(U;Y_e)); no constraint.
    SecretMessage,
    /// I(U;Y_r|S) − I(U;Y_e|S) + H(S|Y_e); no constraint.
    Symmetric,
}

// ---------------------------------------------------------------------------
// Exact term evaluation
// ---------------------------------------------------------------------------

/// All mutual-information terms a bound can ask for, computed exactly from
/// the induced joint p(s)p(u|s)p(x|u,s)p(y_r,y_e|x,s).
#[derive(Debug, Clone, Copy)]
pub struct PolicyTerms {
    pub i_u_yr: f64,
    pub i_u_ye: f64,
    pub i_u_s: f64,
    pub i_u_yr_given_s: f64,
    pub i_u_ye_given_s: f64,
    pub h_s_given_ye: f64,
}

/// Scratch-buffer evaluator; reused across many policy evaluations.
pub(crate) struct PolicyEvaluator<'c> {
    ch: &'c StateWiretapChannel,
    nu: usize,
    p_suyr: Vec<f64>,
    p_suye: Vec<f64>,
    p_su: Vec<f64>,
}

impl<'c> PolicyEvaluator<'c> {
    pub fn new(ch: &'c StateWiretapChannel, nu: usize) -> Self {
        let ns = ch.ns();
        PolicyEvaluator {
            ch,
            nu,
            p_suyr: vec![0.0; ns * nu * ch.nyr()],
            p_suye: vec![0.0; ns * nu * ch.nye()],
            p_su: vec![0.0; ns * nu],
        }
    }

    /// `pu` is p(u|s) row-major [s][u]; `px` is p(x|u,s) row-major [u][s][x].
    pub fn terms_raw(&mut self, pu: &[f64], px: &[f64]) -> PolicyTerms {
        let ch = self.ch;
        let (ns, nu, nx, nyr, nye) = (ch.ns(), self.nu, ch.nx(), ch.nyr(), ch.nye());
        self.p_suyr.iter_mut().for_each(|v| *v = 0.0);
        self.p_suye.iter_mut().for_each(|v| *v = 0.0);
        self.p_su.iter_mut().for_each(|v| *v = 0.0);

        for s in 0..ns {
            let ps = ch.state_prior().get(s);
            if ps == 0.0 {
                continue;
            }
            for u in 0..nu {
                let w = ps * pu[s * nu + u];
                if w == 0.0 {
                    continue;
                }
                self.p_su[s * nu + u] = w;
                for x in 0..nx {
                    let wx = w * px[(u * ns + s) * nx + x];
                    if wx == 0.0 {
                        continue;
                    }
                    let base_r = (s * nu + u) * nyr;
                    for yr in 0..nyr {
                        self.p_suyr[base_r + yr] += wx * ch.p_yr_given(x, s, yr);
                    }
                    let base_e = (s * nu + u) * nye;
                    for ye in 0..nye {
                        self.p_suye[base_e + ye] += wx * ch.p_ye_given(x, s, ye);
                    }
                }
            }
        }

        let p_u = collapse(&self.p_su, ns, nu, CollapseAxis::Second);
        let p_s = collapse(&self.p_su, ns, nu, CollapseAxis::First);

        // joint (u, y) tables
        let mut p_uyr = vec![0.0; nu * nyr];
        let mut p_uye = vec![0.0; nu * nye];
        for s in 0..ns {
            for u in 0..nu {
                for yr in 0..nyr {
                    p_uyr[u * nyr + yr] += self.p_suyr[(s * nu + u) * nyr + yr];
                }
                for ye in 0..nye {
                    p_uye[u * nye + ye] += self.p_suye[(s * nu + u) * nye + ye];
                }
            }
        }
        let p_yr = collapse(&p_uyr, nu, nyr, CollapseAxis::Second);
        let p_ye = collapse(&p_uye, nu, nye, CollapseAxis::Second);

        let i_u_yr = mi_from_joint(&p_uyr, &p_u, &p_yr);
        let i_u_ye = mi_from_joint(&p_uye, &p_u, &p_ye);
        let i_u_s = mi_from_joint_rows(&self.p_su, &p_s, &p_u, ns, nu);

        // conditional terms: Σ_s p(s) I(U;Y|S=s) expressed through joint logs
        let mut i_u_yr_given_s = 0.0;
        let mut i_u_ye_given_s = 0.0;
        for s in 0..ns {
            let ps = p_s[s];
            if ps == 0.0 {
                continue;
            }
            // p(s,yr) and p(s,ye) row
            let mut p_syr = vec![0.0; nyr];
            let mut p_sye = vec![0.0; nye];
            for u in 0..nu {
                for yr in 0..nyr {
                    p_syr[yr] += self.p_suyr[(s * nu + u) * nyr + yr];
                }
                for ye in 0..nye {
                    p_sye[ye] += self.p_suye[(s * nu + u) * nye + ye];
                }
            }
            for u in 0..nu {
                let psu = self.p_su[s * nu + u];
                if psu == 0.0 {
                    continue;
                }
                for yr in 0..nyr {
                    let p = self.p_suyr[(s * nu + u) * nyr + yr];
                    if p > 0.0 {
                        i_u_yr_given_s += p * (p * ps / (psu * p_syr[yr])).log2();
                    }
                }
                for ye in 0..nye {
                    let p = self.p_suye[(s * nu + u) * nye + ye];
                    if p > 0.0 {
                        i_u_ye_given_s += p * (p * ps / (psu * p_sye[ye])).log2();
                    }
                }
            }
        }

        // H(S|Ye) = H(S,Ye) − H(Ye) from p(s,ye)
        let mut p_s_ye = vec![0.0; ns * nye];
        for s in 0..ns {
            for u in 0..nu {
                for ye in 0..nye {
                    p_s_ye[s * nye + ye] += self.p_suye[(s * nu + u) * nye + ye];
                }
            }
        }
        let h_s_given_ye = (entropy_slice(&p_s_ye) - entropy_slice(&p_ye)).max(0.0);

        PolicyTerms {
            i_u_yr,
            i_u_ye,
            i_u_s,
            i_u_yr_given_s: i_u_yr_given_s.max(0.0),
            i_u_ye_given_s: i_u_ye_given_s.max(0.0),
            h_s_given_ye,
        }
    }

    pub fn terms(&mut self, pol: &AuxiliaryPolicy) -> Result<PolicyTerms> {
        check_policy_matches(self.ch, pol)?;
        if pol.nu() != self.nu {
            return Err(Error::argument("policy |U| does not match evaluator"));
        }
        let ns = self.ch.ns();
        let nu = self.nu;
        let nx = self.ch.nx();
        let mut pu = vec![0.0; ns * nu];
        for s in 0..ns {
            for u in 0..nu {
                pu[s * nu + u] = pol.p_u(s, u);
            }
        }
        let mut px = vec![0.0; nu * ns * nx];
        for u in 0..nu {
            for s in 0..ns {
                for x in 0..nx {
                    px[(u * ns + s) * nx + x] = pol.p_x(u, s, x);
                }
            }
        }
        Ok(self.terms_raw(&pu, &px))
    }
}

enum CollapseAxis {
    First,
    Second,
}

fn collapse(joint: &[f64], na: usize, nb: usize, axis: CollapseAxis) -> Vec<f64> {
    match axis {
        CollapseAxis::First => {
            let mut out = vec![0.0; na];
            for a in 0..na {
                for b in 0..nb {
                    out[a] += joint[a * nb + b];
                }
            }
            out
        }
        CollapseAxis::Second => {
            let mut out = vec![0.0; nb];
            for a in 0..na {
                for b in 0..nb {
                    out[b] += joint[a * nb + b];
                }
            }
            out
        }
    }
}

fn mi_from_joint(joint: &[f64], pa: &[f64], pb: &[f64]) -> f64 {
    let (na, nb) = (pa.len(), pb.len());
    let mut i = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let p = joint[a * nb + b];
            if p > 0.0 {
                i += p * (p / (pa[a] * pb[b])).log2();
            }
        }
    }
    i.max(0.0)
}

fn mi_from_joint_rows(joint: &[f64], pa: &[f64], pb: &[f64], na: usize, nb: usize) -> f64 {
    let mut i = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let p = joint[a * nb + b];
            if p > 0.0 {
                i += p * (p / (pa[a] * pb[b])).log2();
            }
        }
    }
    i.max(0.0)
}

fn check_policy_matches(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> Result<()> {
    if pol.ns() != ch.ns() || pol.nx() != ch.nx() {
        return Err(Error::argument(format!(
            "policy alphabets (|S|={}, |X|={}) do not match channel (|S|={}, |X|={})",
            pol.ns(),
            pol.nx(),
            ch.ns(),
            ch.nx()
        )));
    }
    Ok(())
}

pub(crate) fn policy_terms(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> Result<PolicyTerms> {
    let mut ev = PolicyEvaluator::new(ch, pol.nu());
    ev.terms(pol)
}

// ---------------------------------------------------------------------------
// Per-policy rate reports
// ---------------------------------------------------------------------------

/// Achievable key rate of a fixed policy: I(U;Y_r) − I(U;Y_e), feasible when
/// I(U;Y_r) − I(U;S) ≥ −1e-9.
pub fn lower_bound_rate(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> Result<RateReport> {
    let t = policy_terms(ch, pol)?;
    Ok(RateReport::new(
        t.i_u_yr - t.i_u_ye,
        t.i_u_yr - t.i_u_s >= -FEASIBILITY_TOL,
        &[
            ("I(U;Yr)", t.i_u_yr),
            ("I(U;Ye)", t.i_u_ye),
            ("I(U;S)", t.i_u_s),
        ],
    ))
}

/// Secret-message rate of a fixed policy: I(U;Y_r) − max(I(U;S), I(U;Y_e)).
pub fn secret_message_rate(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> Result<RateReport> {
    let t = policy_terms(ch, pol)?;
    Ok(RateReport::new(
        t.i_u_yr - t.i_u_s.max(t.i_u_ye),
        true,
        &[
            ("I(U;Yr)", t.i_u_yr),
            ("I(U;Ye)", t.i_u_ye),
            ("I(U;S)", t.i_u_s),
        ],
    ))
}

/// Symmetric-CSI rate of a fixed policy:
/// I(U;Y_r|S) − I(U;Y_e|S) + H(S|Y_e).
pub fn symmetric_rate(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> Result<RateReport> {
    let t = policy_terms(ch, pol)?;
    Ok(RateReport::new(
        t.i_u_yr_given_s - t.i_u_ye_given_s + t.h_s_given_ye,
        true,
        &[
            ("I(U;Yr|S)", t.i_u_yr_given_s),
            ("I(U;Ye|S)", t.i_u_ye_given_s),
            ("H(S|Ye)", t.h_s_given_ye),
        ],
    ))
}

fn objective_of(t: &PolicyTerms, obj: Objective) -> f64 {
    match obj {
        Objective::LowerBound => {
            t.i_u_yr - t.i_u_ye - CONSTRAINT_PENALTY * (t.i_u_s - t.i_u_yr).max(0.0)
        }
        Objective::SecretMessage => t.i_u_yr - t.i_u_s.max(t.i_u_ye),
        Objective::Symmetric => t.i_u_yr_given_s - t.i_u_ye_given_s + t.h_s_given_ye,
    }
}

fn report_of(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy, obj: Objective) -> Result<RateReport> {
    match obj {
        Objective::LowerBound => lower_bound_rate(ch, pol),
        Objective::SecretMessage => secret_message_rate(ch, pol),
        Objective::Symmetric => symmetric_rate(ch, pol),
    }
}

// ---------------------------------------------------------------------------
// Projected-gradient ascent over simplex parameter blocks
// ---------------------------------------------------------------------------

/// Euclidean projection of a vector onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = (sorted.iter().sum::<f64>() - 1.0) / n as f64;
    for (k, &val) in sorted.iter().enumerate() {
        acc += val;
        let t = (acc - 1.0) / (k + 1) as f64;
        if val - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    // kill residual drift
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        for x in v.iter_mut() {
            *x /= sum;
        }
    } else {
        let u = 1.0 / n as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Parameter blocks: a list of simplex rows of (possibly) different lengths.
#[derive(Clone)]
struct SimplexBlocks {
    data: Vec<f64>,
    offsets: Vec<usize>, // row i occupies offsets[i]..offsets[i+1]
}

impl SimplexBlocks {
    fn new(row_lens: &[usize]) -> Self {
        let mut offsets = vec![0];
        for &l in row_lens {
            offsets.push(offsets.last().unwrap() + l);
        }
        SimplexBlocks {
            data: vec![0.0; *offsets.last().unwrap()],
            offsets,
        }
    }

    fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        &mut self.data[a..b]
    }

    fn project(&mut self) {
        for i in 0..self.num_rows() {
            project_simplex(self.row_mut(i));
        }
    }
}

struct AscentResult {
    params: SimplexBlocks,
    value: f64,
}

/// Maximizes `f` by projected-gradient ascent with backtracking.
fn ascend(
    start: SimplexBlocks,
    f: &mut impl FnMut(&SimplexBlocks) -> f64,
    opts: &OptimizerOptions,
) -> AscentResult {
    const GRAD_H: f64 = 1e-6;
    let mut cur = start;
    cur.project();
    let mut cur_val = f(&cur);
    let mut best_val = cur_val;
    let mut since_improve = 0;
    let mut step = opts.initial_step;
    let dim = cur.data.len();
    let mut grad = vec![0.0; dim];

    for _ in 0..opts.max_iters {
        for i in 0..dim {
            let orig = cur.data[i];
            cur.data[i] = orig + GRAD_H;
            let up = f(&cur);
            cur.data[i] = (orig - GRAD_H).max(0.0);
            let lo = cur.data[i];
            let down = f(&cur);
            cur.data[i] = orig;
            grad[i] = (up - down) / (GRAD_H + orig - lo);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }

        let mut eta = step;
        let mut accepted = false;
        for _ in 0..10 {
            let mut cand = cur.clone();
            for i in 0..dim {
                cand.data[i] += eta * grad[i];
            }
            cand.project();
            let v = f(&cand);
            if v > cur_val + 1e-15 {
                cur = cand;
                cur_val = v;
                accepted = true;
                step = (eta * 2.0).min(opts.initial_step * 4.0);
                break;
            }
            eta /= 4.0;
        }
        if !accepted {
            step = (step / 4.0).max(1e-9);
        }

        if cur_val > best_val + opts.tol_bits {
            best_val = cur_val;
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= opts.patience {
                break;
            }
        }
    }
    AscentResult {
        params: cur,
        value: cur_val,
    }
}

/// Pairwise mass-move refinement: golden-section line searches between every
/// pair of coordinates within each simplex row. Cleans up ridge stalls that
/// projected-gradient steps leave behind near the boundary.
fn coordinate_polish(
    mut blocks: SimplexBlocks,
    f: &mut impl FnMut(&SimplexBlocks) -> f64,
    tol: f64,
) -> AscentResult {
    let mut val = f(&blocks);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..8 {
        let mut improved = false;
        for row in 0..blocks.num_rows() {
            let (off, end) = (blocks.offsets[row], blocks.offsets[row + 1]);
            let dim = end - off;
            for i in 0..dim {
                for j in i + 1..dim {
                    let pi = blocks.data[off + i];
                    let pj = blocks.data[off + j];
                    // move t from j to i: t ∈ [−pi, pj]
                    let (mut lo, mut hi) = (-pi, pj);
                    if hi - lo < 1e-12 {
                        continue;
                    }
                    let mut eval_t = |blocks: &mut SimplexBlocks, t: f64| -> f64 {
                        blocks.data[off + i] = pi + t;
                        blocks.data[off + j] = pj - t;
                        f(blocks)
                    };
                    // probe interior and endpoints, then refine
                    let mut best = (0.0f64, val);
                    for &t in &[lo, 0.5 * lo, 0.5 * hi, hi] {
                        let v = eval_t(&mut blocks, t);
                        if v > best.1 + 1e-13 {
                            best = (t, v);
                        }
                    }
                    for _ in 0..24 {
                        let m1 = hi - phi * (hi - lo);
                        let m2 = lo + phi * (hi - lo);
                        if eval_t(&mut blocks, m1) >= eval_t(&mut blocks, m2) {
                            hi = m2;
                        } else {
                            lo = m1;
                        }
                        if hi - lo < 1e-10 {
                            break;
                        }
                    }
                    let mid = 0.5 * (lo + hi);
                    let v_mid = eval_t(&mut blocks, mid);
                    if v_mid > best.1 + 1e-13 {
                        best = (mid, v_mid);
                    }
                    // commit the winner (or restore)
                    let v_final = eval_t(&mut blocks, best.0);
                    if v_final > val + tol * 1e-3 {
                        val = v_final;
                        improved = true;
                    } else {
                        blocks.data[off + i] = pi;
                        blocks.data[off + j] = pj;
                        val = f(&blocks);
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    AscentResult {
        params: blocks,
        value: val,
    }
}

fn policy_row_lens(ns: usize, nu: usize, nx: usize) -> Vec<usize> {
    let mut lens = vec![nu; ns];
    lens.extend(std::iter::repeat(nx).take(nu * ns));
    lens
}

fn blocks_to_policy(blocks: &SimplexBlocks, ns: usize, nu: usize, nx: usize) -> Result<AuxiliaryPolicy> {
    let mut pu_rows = Vec::with_capacity(ns);
    for s in 0..ns {
        let a = blocks.offsets[s];
        pu_rows.push(blocks.data[a..a + nu].to_vec());
    }
    let mut px_rows = Vec::with_capacity(nu * ns);
    for r in 0..nu * ns {
        let a = blocks.offsets[ns + r];
        px_rows.push(blocks.data[a..a + nx].to_vec());
    }
    AuxiliaryPolicy::new(Kernel::new(pu_rows)?, Kernel::new(px_rows)?)
}

/// Structured and random initial points for the policy search.
fn init_blocks(
    restart: usize,
    ns: usize,
    nu: usize,
    nx: usize,
    seed: u64,
) -> SimplexBlocks {
    let lens = policy_row_lens(ns, nu, nx);
    let mut b = SimplexBlocks::new(&lens);
    match restart {
        0 => {
            // uniform everywhere
            for i in 0..b.num_rows() {
                let row = b.row_mut(i);
                let u = 1.0 / row.len() as f64;
                row.iter_mut().for_each(|x| *x = u);
            }
        }
        1 => {
            // u tracks s, x tracks u
            for s in 0..ns {
                let row = b.row_mut(s);
                row[s % nu] = 1.0;
            }
            for u in 0..nu {
                for s in 0..ns {
                    let row = b.row_mut(ns + u * ns + s);
                    row[u % nx] = 1.0;
                }
            }
        }
        2 => {
            // state-augmented: u = (k, s) with k spread uniformly, x = k
            for s in 0..ns {
                let row = b.row_mut(s);
                let mut count = 0;
                for u in 0..nu {
                    if u % ns == s {
                        count += 1;
                    }
                }
                for u in 0..nu {
                    if u % ns == s {
                        row[u] = 1.0 / count as f64;
                    }
                }
            }
            for u in 0..nu {
                for s in 0..ns {
                    let row = b.row_mut(ns + u * ns + s);
                    row[(u / ns) % nx] = 1.0;
                }
            }
        }
        3 => {
            // u independent of s, x = u
            for s in 0..ns {
                let row = b.row_mut(s);
                let v = 1.0 / nu as f64;
                row.iter_mut().for_each(|x| *x = v);
            }
            for u in 0..nu {
                for s in 0..ns {
                    let row = b.row_mut(ns + u * ns + s);
                    row[u % nx] = 1.0;
                }
            }
        }
        _ => {
            let mut rng = stream_rng(seed, restart as u64);
            let vertexy = restart % 2 == 1;
            for i in 0..b.num_rows() {
                let row = b.row_mut(i);
                if vertexy {
                    let k = rng.gen_range(0..row.len());
                    row[k] = 1.0;
                } else {
                    // Dirichlet(1): normalized exponentials
                    let mut sum = 0.0;
                    for x in row.iter_mut() {
                        let e: f64 = rng.gen::<f64>().max(1e-12);
                        *x = -e.ln();
                        sum += *x;
                    }
                    row.iter_mut().for_each(|x| *x /= sum);
                }
            }
        }
    }
    b
}

struct Candidate {
    policy: AuxiliaryPolicy,
    report: RateReport,
    restart: usize,
}

/// Embeds a policy over a smaller auxiliary alphabet into `nu` symbols: the
/// extra symbols get zero mass and uniform input rows.
fn embed_policy(pol: &AuxiliaryPolicy, nu: usize) -> SimplexBlocks {
    let (ns, nu_small, nx) = (pol.ns(), pol.nu(), pol.nx());
    let mut b = SimplexBlocks::new(&policy_row_lens(ns, nu, nx));
    for s in 0..ns {
        let row = b.row_mut(s);
        for u in 0..nu_small {
            row[u] = pol.p_u(s, u);
        }
    }
    for u in 0..nu {
        for s in 0..ns {
            let row = b.row_mut(ns + u * ns + s);
            if u < nu_small {
                for x in 0..nx {
                    row[x] = pol.p_x(u, s, x);
                }
            } else {
                let v = 1.0 / nx as f64;
                row.iter_mut().for_each(|r| *r = v);
            }
        }
    }
    b
}

fn optimize_policy(
    ch: &StateWiretapChannel,
    obj: Objective,
    opts: &OptimizerOptions,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    opts.validate()?;
    let ns = ch.ns();
    let nx = ch.nx();
    let nu = opts.u_size_for(ch);

    // hierarchical warm starts: the optimum over a smaller auxiliary alphabet
    // embeds into the larger one, which the flat search often misses
    let mut starts: Vec<SimplexBlocks> = (0..opts.restarts)
        .map(|r| init_blocks(r, ns, nu, nx, opts.seed))
        .collect();
    if nu > 2 {
        let sub_opts = OptimizerOptions {
            u_size: Some(2),
            restarts: (opts.restarts / 2).max(8),
            ..opts.clone()
        };
        if let Ok((sub_pol, _)) = optimize_policy(ch, obj, &sub_opts) {
            starts.push(embed_policy(&sub_pol, nu));
        }
    }
    // a coarse grid point is a cheap basin locator on small instances
    if grid_fits(ns, nu, nx, 5) {
        if let Ok((coarse_pol, _)) = grid_search(ch, obj, nu, 0.2) {
            starts.push(embed_policy(&coarse_pol, nu));
        }
    }

    let candidates: Vec<Candidate> = starts
        .into_par_iter()
        .enumerate()
        .filter_map(|(restart, start)| {
            let mut ev = PolicyEvaluator::new(ch, nu);
            let mut f = |b: &SimplexBlocks| {
                let split = ns * nu;
                let t = ev.terms_raw(&b.data[..split], &b.data[split..]);
                objective_of(&t, obj)
            };
            let res = ascend(start, &mut f, opts);
            let res = coordinate_polish(res.params, &mut f, opts.tol_bits);
            let policy = blocks_to_policy(&res.params, ns, nu, nx).ok()?;
            let report = report_of(ch, &policy, obj).ok()?;
            Some(Candidate {
                policy,
                report,
                restart,
            })
        })
        .collect();

    select_candidate(ch, candidates, obj, opts, nu)
}

fn policy_support(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> usize {
    let pu = pol.u_marginal(ch.state_prior()).map(|p| p.as_slice().to_vec());
    match pu {
        Ok(p) => p.iter().filter(|&&v| v >= 1e-6).count(),
        Err(_) => usize::MAX,
    }
}

fn select_candidate(
    ch: &StateWiretapChannel,
    mut candidates: Vec<Candidate>,
    obj: Objective,
    opts: &OptimizerOptions,
    nu: usize,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    if obj == Objective::LowerBound {
        candidates.retain(|c| c.report.feasible);
    }
    if candidates.is_empty() {
        // trivial independent policy: both mutual informations are zero
        let pol = AuxiliaryPolicy::independent(ch.ns(), nu, &ProbVector::uniform(ch.nx()));
        let report = report_of(ch, &pol, obj)?
            .with_note("no feasible policy found; returning the trivial independent policy");
        return Ok((pol, report));
    }
    let best = candidates
        .iter()
        .map(|c| c.report.rate)
        .fold(f64::NEG_INFINITY, f64::max);
    // among near-ties prefer the smallest auxiliary support, then restart order
    let mut chosen: Option<(usize, usize, usize)> = None; // (support, restart, index)
    for (i, c) in candidates.iter().enumerate() {
        if c.report.rate >= best - opts.tol_bits {
            let key = (policy_support(ch, &c.policy), c.restart, i);
            if chosen.map_or(true, |k| key < k) {
                chosen = Some(key);
            }
        }
    }
    let idx = chosen.unwrap().2;
    let c = candidates.swap_remove(idx);
    let report = c
        .report
        .with_note("auxiliary cardinality capped at |S|(1+|X|) (heuristic)");
    Ok((c.policy, report))
}

/// Maximizes the achievable key rate. The returned report is an exact
/// re-evaluation of the best feasible policy found.
pub fn optimize_lower_bound(
    ch: &StateWiretapChannel,
    opts: &OptimizerOptions,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    optimize_policy(ch, Objective::LowerBound, opts)
}

/// Maximizes the secret-message rate.
pub fn optimize_secret_message(
    ch: &StateWiretapChannel,
    opts: &OptimizerOptions,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    optimize_policy(ch, Objective::SecretMessage, opts)
}

/// Symmetric-CSI capacity: maximizes I(U;Y_r|S) − I(U;Y_e|S) + H(S|Y_e) over
/// policies with |U| ≤ |S|(1+|X|). Takes the channel WITHOUT the state folded
/// into Y_r; the three-term breakdown exposes the wiretap-rate vs
/// state-masking tension.
pub fn symmetric_capacity(
    ch: &StateWiretapChannel,
    opts: &OptimizerOptions,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    optimize_policy(ch, Objective::Symmetric, opts)
}

/// Masking-only capacity: maximizes H(S|Y_e) over p(x|s) alone. The caller
/// asserts the less-noisy premise; it is not verified here.
pub fn masking_capacity(
    ch: &StateWiretapChannel,
    opts: &OptimizerOptions,
) -> Result<(Kernel, RateReport)> {
    opts.validate()?;
    let ns = ch.ns();
    let nx = ch.nx();
    let nye = ch.nye();
    let prior = ch.state_prior().clone();

    let eval = |blocks: &SimplexBlocks| -> f64 {
        let mut p_s_ye = vec![0.0; ns * nye];
        for s in 0..ns {
            let ps = prior.get(s);
            if ps == 0.0 {
                continue;
            }
            let row = &blocks.data[blocks.offsets[s]..blocks.offsets[s + 1]];
            for (x, &pxv) in row.iter().enumerate() {
                if pxv == 0.0 {
                    continue;
                }
                for ye in 0..nye {
                    p_s_ye[s * nye + ye] += ps * pxv * ch.p_ye_given(x, s, ye);
                }
            }
        }
        let p_ye = collapse(&p_s_ye, ns, nye, CollapseAxis::Second);
        (entropy_slice(&p_s_ye) - entropy_slice(&p_ye)).max(0.0)
    };

    let restarts = opts.restarts.min(16).max(2);
    let mut best: Option<(f64, SimplexBlocks, usize)> = None;
    for restart in 0..restarts {
        let lens = vec![nx; ns];
        let mut start = SimplexBlocks::new(&lens);
        if restart == 0 {
            for i in 0..ns {
                let row = start.row_mut(i);
                let u = 1.0 / nx as f64;
                row.iter_mut().for_each(|v| *v = u);
            }
        } else {
            let mut rng = stream_rng(opts.seed, 1000 + restart as u64);
            for i in 0..ns {
                let row = start.row_mut(i);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = -(rng.gen::<f64>().max(1e-12)).ln();
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        let mut f = eval;
        let res = ascend(start, &mut f, opts);
        let res = coordinate_polish(res.params, &mut f, opts.tol_bits);
        if best.as_ref().map_or(true, |(v, _, _)| res.value > *v) {
            best = Some((res.value, res.params, restart));
        }
    }
    let (value, params, _) = best.unwrap();
    let rows: Vec<Vec<f64>> = (0..ns)
        .map(|s| params.data[params.offsets[s]..params.offsets[s + 1]].to_vec())
        .collect();
    let kernel = Kernel::new(rows)?;
    let report = RateReport::new(value, true, &[("H(S|Ye)", value)])
        .with_note("less-noisy premise asserted by caller, not verified");
    Ok((kernel, report))
}

// ---------------------------------------------------------------------------
// Upper bound: min over couplings of max over inputs of I(X,S;Yr|Ye)
// ---------------------------------------------------------------------------

/// A joint conditional law q(y_r, y_e | x, s) whose marginals match the
/// channel's p(y_r|x,s) and p(y_e|x,s).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    q: Vec<f64>, // [x][s][yr][ye]
    nx: usize,
    ns: usize,
    nyr: usize,
    nye: usize,
}

impl Coupling {
    /// The product coupling q = p(y_r|x,s)·p(y_e|x,s).
    pub fn independent(ch: &StateWiretapChannel) -> Coupling {
        let (nx, ns, nyr, nye) = (ch.nx(), ch.ns(), ch.nyr(), ch.nye());
        let mut q = vec![0.0; nx * ns * nyr * nye];
        for x in 0..nx {
            for s in 0..ns {
                for yr in 0..nyr {
                    for ye in 0..nye {
                        q[((x * ns + s) * nyr + yr) * nye + ye] =
                            ch.p_yr_given(x, s, yr) * ch.p_ye_given(x, s, ye);
                    }
                }
            }
        }
        Coupling { q, nx, ns, nyr, nye }
    }

    /// The inverse-CDF (monotone) coupling. When the two marginals coincide
    /// this is the diagonal coupling Y_r = Y_e.
    pub fn monotone(ch: &StateWiretapChannel) -> Coupling {
        let (nx, ns, nyr, nye) = (ch.nx(), ch.ns(), ch.nyr(), ch.nye());
        let mut q = vec![0.0; nx * ns * nyr * nye];
        for x in 0..nx {
            for s in 0..ns {
                let mut i = 0;
                let mut j = 0;
                let mut ra = ch.p_yr_given(x, s, 0);
                let mut rb = ch.p_ye_given(x, s, 0);
                loop {
                    let m = ra.min(rb).max(0.0);
                    q[((x * ns + s) * nyr + i) * nye + j] += m;
                    ra -= m;
                    rb -= m;
                    if ra <= 1e-15 {
                        i += 1;
                        if i == nyr {
                            break;
                        }
                        ra = ch.p_yr_given(x, s, i);
                    }
                    if rb <= 1e-15 {
                        j += 1;
                        if j == nye {
                            break;
                        }
                        rb = ch.p_ye_given(x, s, j);
                    }
                }
            }
        }
        Coupling { q, nx, ns, nyr, nye }
    }

    /// The coupling that carries the channel's own joint p(y_r,y_e|x,s).
    pub fn from_channel(ch: &StateWiretapChannel) -> Coupling {
        let (nx, ns, nyr, nye) = (ch.nx(), ch.ns(), ch.nyr(), ch.nye());
        let mut q = vec![0.0; nx * ns * nyr * nye];
        for x in 0..nx {
            for s in 0..ns {
                for yr in 0..nyr {
                    for ye in 0..nye {
                        q[((x * ns + s) * nyr + yr) * nye + ye] = ch.p_out(x, s, yr, ye);
                    }
                }
            }
        }
        Coupling { q, nx, ns, nyr, nye }
    }

    #[inline]
    pub fn prob(&self, x: usize, s: usize, yr: usize, ye: usize) -> f64 {
        self.q[((x * self.ns + s) * self.nyr + yr) * self.nye + ye]
    }

    /// Checks both marginals against the channel, within `tol`.
    pub fn validate_against(&self, ch: &StateWiretapChannel, tol: f64) -> Result<()> {
        if self.nx != ch.nx() || self.ns != ch.ns() || self.nyr != ch.nyr() || self.nye != ch.nye()
        {
            return Err(Error::argument("coupling shape does not match channel"));
        }
        for x in 0..self.nx {
            for s in 0..self.ns {
                for yr in 0..self.nyr {
                    let m: f64 = (0..self.nye).map(|ye| self.prob(x, s, yr, ye)).sum();
                    let want = ch.p_yr_given(x, s, yr);
                    if (m - want).abs() > tol {
                        return Err(Error::argument(format!(
                            "coupling y_r marginal off by {:.3e} at (x={x}, s={s}, y_r={yr})",
                            (m - want).abs()
                        )));
                    }
                }
                for ye in 0..self.nye {
                    let m: f64 = (0..self.nyr).map(|yr| self.prob(x, s, yr, ye)).sum();
                    let want = ch.p_ye_given(x, s, ye);
                    if (m - want).abs() > tol {
                        return Err(Error::argument(format!(
                            "coupling y_e marginal off by {:.3e} at (x={x}, s={s}, y_e={ye})",
                            (m - want).abs()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// I(X,S;Y_r|Y_e) under p(s)·p(x|s)·q(y_r,y_e|x,s).
pub fn upper_bound_value(
    ch: &StateWiretapChannel,
    coupling: &Coupling,
    p_x_given_s: &Kernel,
) -> Result<f64> {
    coupling.validate_against(ch, COUPLING_MARGINAL_TOL)?;
    if p_x_given_s.num_rows() != ch.ns() || p_x_given_s.out_size() != ch.nx() {
        return Err(Error::argument("p(x|s) shape does not match channel"));
    }
    let mut pxs = vec![0.0; ch.ns() * ch.nx()];
    for s in 0..ch.ns() {
        for x in 0..ch.nx() {
            pxs[s * ch.nx() + x] = p_x_given_s.prob(s, x);
        }
    }
    Ok(conditional_info_raw(ch, coupling, &pxs))
}

/// Same as [`upper_bound_value`] but on raw p(x|s) entries; no validation.
fn conditional_info_raw(ch: &StateWiretapChannel, coupling: &Coupling, pxs: &[f64]) -> f64 {
    let (nx, ns, nyr, nye) = (ch.nx(), ch.ns(), ch.nyr(), ch.nye());
    // joint over (x, s, yr, ye)
    let mut h_full = 0.0; // H(X,S,Yr,Ye)
    let mut p_xs_ye = vec![0.0; nx * ns * nye];
    let mut p_yr_ye = vec![0.0; nyr * nye];
    for x in 0..nx {
        for s in 0..ns {
            let w = ch.state_prior().get(s) * pxs[s * nx + x];
            if w == 0.0 {
                continue;
            }
            for yr in 0..nyr {
                for ye in 0..nye {
                    let p = w * coupling.prob(x, s, yr, ye);
                    if p > 0.0 {
                        h_full -= xlog2x(p);
                        p_xs_ye[(x * ns + s) * nye + ye] += p;
                        p_yr_ye[yr * nye + ye] += p;
                    }
                }
            }
        }
    }
    let p_ye = collapse(&p_yr_ye, nyr, nye, CollapseAxis::Second);
    let h_yr_ye = entropy_slice(&p_yr_ye);
    let h_ye = entropy_slice(&p_ye);
    let h_xs_ye = entropy_slice(&p_xs_ye);
    // I(X,S;Yr|Ye) = H(Yr|Ye) − H(Yr|X,S,Ye)
    (h_yr_ye - h_ye - (h_full - h_xs_ye)).max(0.0)
}

/// Result of the converse optimization.
#[derive(Debug, Clone, Serialize)]
pub struct UpperBoundResult {
    pub coupling: Coupling,
    /// The input distribution achieving the inner maximum.
    pub input: Kernel,
    pub report: RateReport,
}

/// Inner maximization over p(x|s); the objective is concave in the input
/// distribution, so a couple of restarts suffice.
fn inner_max(
    ch: &StateWiretapChannel,
    coupling: &Coupling,
    opts: &OptimizerOptions,
    restarts: usize,
    warm: Option<&SimplexBlocks>,
) -> (SimplexBlocks, f64) {
    let ns = ch.ns();
    let nx = ch.nx();
    let lens = vec![nx; ns];
    let inner_opts = OptimizerOptions {
        max_iters: 250,
        patience: 40,
        tol_bits: 1e-11,
        initial_step: 0.5,
        ..opts.clone()
    };
    let mut best: Option<(f64, SimplexBlocks)> = None;
    let total = restarts + warm.is_some() as usize;
    for restart in 0..total {
        let start = if let (0, Some(w)) = (restart, warm) {
            w.clone()
        } else {
            let mut b = SimplexBlocks::new(&lens);
            if restart == warm.is_some() as usize {
                for i in 0..ns {
                    let row = b.row_mut(i);
                    let u = 1.0 / nx as f64;
                    row.iter_mut().for_each(|v| *v = u);
                }
            } else {
                let mut rng = stream_rng(opts.seed, 2000 + restart as u64);
                for i in 0..ns {
                    let row = b.row_mut(i);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = -(rng.gen::<f64>().max(1e-12)).ln();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
            b
        };
        let mut f = |b: &SimplexBlocks| conditional_info_raw(ch, coupling, &b.data);
        let res = ascend(start, &mut f, &inner_opts);
        if best.as_ref().map_or(true, |(v, _)| res.value > *v) {
            best = Some((res.value, res.params));
        }
    }
    let (v, b) = best.unwrap();
    (b, v)
}

/// One pass of coordinate descent over marginal-preserving 2×2 rectangle
/// moves, from a given starting coupling.
fn outer_descent(
    ch: &StateWiretapChannel,
    mut coupling: Coupling,
    opts: &OptimizerOptions,
) -> (Coupling, SimplexBlocks, f64) {
    let (nx, ns, nyr, nye) = (ch.nx(), ch.ns(), ch.nyr(), ch.nye());
    let (mut warm, mut cur_val) = inner_max(ch, &coupling, opts, 2, None);

    let max_sweeps = 50;
    for _ in 0..max_sweeps {
        let mut improved = false;
        for x in 0..nx {
            for s in 0..ns {
                for yr1 in 0..nyr {
                    for yr2 in yr1 + 1..nyr {
                        for ye1 in 0..nye {
                            for ye2 in ye1 + 1..nye {
                                let idx = |yr: usize, ye: usize| {
                                    ((x * ns + s) * nyr + yr) * nye + ye
                                };
                                let q11 = coupling.q[idx(yr1, ye1)];
                                let q12 = coupling.q[idx(yr1, ye2)];
                                let q21 = coupling.q[idx(yr2, ye1)];
                                let q22 = coupling.q[idx(yr2, ye2)];
                                let lo = -q11.min(q22);
                                let hi = q12.min(q21);
                                if hi - lo < 1e-12 {
                                    continue;
                                }
                                let eval_move = |d: f64, warm: &SimplexBlocks| -> f64 {
                                    let mut cand = coupling.clone();
                                    cand.q[idx(yr1, ye1)] = (q11 + d).max(0.0);
                                    cand.q[idx(yr1, ye2)] = (q12 - d).max(0.0);
                                    cand.q[idx(yr2, ye1)] = (q21 - d).max(0.0);
                                    cand.q[idx(yr2, ye2)] = (q22 + d).max(0.0);
                                    inner_max(ch, &cand, opts, 0, Some(warm)).1
                                };
                                // coarse scan, then golden refinement
                                let mut best_local = (0.0f64, cur_val);
                                let mut best_k = -1i64;
                                for k in 0..=8 {
                                    let d = lo + (hi - lo) * k as f64 / 8.0;
                                    if d.abs() < 1e-15 {
                                        continue;
                                    }
                                    let v = eval_move(d, &warm);
                                    if v < best_local.1 - 1e-10 {
                                        best_local = (d, v);
                                        best_k = k;
                                    }
                                }
                                if best_k >= 0 {
                                    let step = (hi - lo) / 8.0;
                                    let mut a = (best_local.0 - step).max(lo);
                                    let mut b = (best_local.0 + step).min(hi);
                                    for _ in 0..12 {
                                        let m1 = a + (b - a) * 0.382;
                                        let m2 = a + (b - a) * 0.618;
                                        if eval_move(m1, &warm) < eval_move(m2, &warm) {
                                            b = m2;
                                        } else {
                                            a = m1;
                                        }
                                    }
                                    let mid = 0.5 * (a + b);
                                    let v_mid = eval_move(mid, &warm);
                                    if v_mid < best_local.1 {
                                        best_local = (mid, v_mid);
                                    }
                                }
                                if best_local.0 != 0.0 && best_local.1 < cur_val - 1e-10 {
                                    let d = best_local.0;
                                    coupling.q[idx(yr1, ye1)] = (q11 + d).max(0.0);
                                    coupling.q[idx(yr1, ye2)] = (q12 - d).max(0.0);
                                    coupling.q[idx(yr2, ye1)] = (q21 - d).max(0.0);
                                    coupling.q[idx(yr2, ye2)] = (q22 + d).max(0.0);
                                    let (w, v) = inner_max(ch, &coupling, opts, 1, Some(&warm));
                                    warm = w;
                                    cur_val = v;
                                    improved = true;
                                }
                            }
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    (coupling, warm, cur_val)
}

/// Minimizes the converse objective over the coupling polytope by
/// marginal-preserving 2×2 rectangle moves from several starting couplings
/// (product, monotone, and the channel's own joint). The returned value is a
/// valid upper bound for any coupling, so local optimality of the outer
/// search does not affect soundness.
pub fn optimize_upper_bound(
    ch: &StateWiretapChannel,
    opts: &OptimizerOptions,
) -> Result<UpperBoundResult> {
    opts.validate()?;
    let ns = ch.ns();
    let starts = [
        Coupling::independent(ch),
        Coupling::monotone(ch),
        Coupling::from_channel(ch),
    ];
    let mut best: Option<(Coupling, SimplexBlocks, f64)> = None;
    for start in starts {
        let (coupling, warm, val) = outer_descent(ch, start, opts);
        if best.as_ref().map_or(true, |(_, _, v)| val < *v) {
            best = Some((coupling, warm, val));
        }
    }
    let (coupling, warm, cur_val) = best.unwrap();

    // certify: fresh inner maximization on the final coupling
    let (final_input, final_val) = inner_max(ch, &coupling, opts, 4, Some(&warm));
    let value = final_val.max(cur_val);
    let rows: Vec<Vec<f64>> = (0..ns)
        .map(|s| final_input.data[final_input.offsets[s]..final_input.offsets[s + 1]].to_vec())
        .collect();
    let report = RateReport::new(value, true, &[("I(X,S;Yr|Ye)", value)])
        .with_note("outer minimization is local; any fixed coupling certifies an upper bound");
    Ok(UpperBoundResult {
        coupling,
        input: Kernel::new(rows)?,
        report,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive grid oracle
// ---------------------------------------------------------------------------

/// Grid-point budget for the generic enumeration path of [`grid_search`].
/// The all-binary case bypasses this through a decomposition that carries the
/// full 51⁶ grid at step 0.02.
pub const GRID_BUDGET: u128 = 200_000_000;

/// Exhaustively maximizes the objective over policies whose simplex rows all
/// lie on the grid {0, step, 2·step, …, 1}. Used as the independent oracle
/// for the multi-start optimizers on binary instances.
pub fn grid_search(
    ch: &StateWiretapChannel,
    obj: Objective,
    u_size: usize,
    step: f64,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config("grid step must be in (0, 1]"));
    }
    let levels = (1.0 / step).round() as usize;
    if ((levels as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::config("grid step must divide 1"));
    }
    let ns = ch.ns();
    let nx = ch.nx();

    if obj != Objective::Symmetric
        && ns == 2
        && u_size == 2
        && nx == 2
        && ch.nyr() == 2
        && ch.nye() == 2
    {
        return grid_search_binary(ch, obj, levels);
    }

    // generic enumeration: count grid points first
    let lens = policy_row_lens(ns, u_size, nx);
    let mut total: u128 = 1;
    for &d in &lens {
        total = total.saturating_mul(compositions(levels, d));
        if total > GRID_BUDGET {
            return Err(Error::size(
                "grid enumeration",
                total,
                GRID_BUDGET,
            ));
        }
    }

    let mut blocks = SimplexBlocks::new(&lens);
    let mut ev = PolicyEvaluator::new(ch, u_size);
    let mut best: Option<(f64, SimplexBlocks)> = None;
    let split = ns * u_size;
    enumerate_rows(&mut blocks, 0, levels, step, &mut |b| {
        let t = ev.terms_raw(&b.data[..split], &b.data[split..]);
        let v = match obj {
            Objective::LowerBound => {
                if t.i_u_yr - t.i_u_s < -FEASIBILITY_TOL {
                    return;
                }
                t.i_u_yr - t.i_u_ye
            }
            _ => objective_of(&t, obj),
        };
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, b.clone()));
        }
    });

    let (_, params) = best.ok_or_else(|| Error::numeric("no feasible grid point"))?;
    let policy = blocks_to_policy(&params, ns, u_size, nx)?;
    let report = report_of(ch, &policy, obj)?;
    Ok((policy, report))
}

/// Whether a full grid at the given resolution stays cheap enough to use as
/// an optimizer seed.
fn grid_fits(ns: usize, nu: usize, nx: usize, levels: usize) -> bool {
    let mut total: u128 = 1;
    for d in policy_row_lens(ns, nu, nx) {
        total = total.saturating_mul(compositions(levels, d));
        if total > 1_000_000 {
            return false;
        }
    }
    true
}

fn compositions(levels: usize, dim: usize) -> u128 {
    // number of ways to write `levels` as an ordered sum of `dim` nonnegatives
    let mut c: u128 = 1;
    for i in 0..dim - 1 {
        c = c * (levels + i + 1) as u128 / (i + 1) as u128;
    }
    c
}

fn enumerate_rows(
    blocks: &mut SimplexBlocks,
    row: usize,
    levels: usize,
    step: f64,
    visit: &mut impl FnMut(&SimplexBlocks),
) {
    if row == blocks.num_rows() {
        visit(blocks);
        return;
    }
    let (a, b) = (blocks.offsets[row], blocks.offsets[row + 1]);
    let dim = b - a;
    let mut comp = vec![0usize; dim];
    enumerate_compositions(&mut comp, 0, levels, &mut |c| {
        for (i, &k) in c.iter().enumerate() {
            blocks.data[a + i] = k as f64 * step;
        }
        // snap the last coordinate so the row sums to exactly 1
        let head: f64 = c[..dim - 1].iter().map(|&k| k as f64 * step).sum();
        blocks.data[a + dim - 1] = (1.0 - head).max(0.0);
        enumerate_rows(blocks, row + 1, levels, step, visit);
    });
}

fn enumerate_compositions(
    comp: &mut Vec<usize>,
    pos: usize,
    remaining: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if pos == comp.len() - 1 {
        comp[pos] = remaining;
        visit(comp);
        return;
    }
    for k in 0..=remaining {
        comp[pos] = k;
        enumerate_compositions(comp, pos + 1, remaining - k, visit);
    }
}

// Specialized exhaustive grid for the all-binary case (|S|=|U|=|X|=|Yr|=|Ye|=2).
// The six free parameters are a = p(u₀|s₀), b = p(u₀|s₁) and c_{u,s} = p(x₀|u,s).
// For fixed (a, b) the objective decomposes over u into per-u summaries
// (mixture contributions and conditional entropies), leaving a pair loop.
fn grid_search_binary(
    ch: &StateWiretapChannel,
    obj: Objective,
    levels: usize,
) -> Result<(AuxiliaryPolicy, RateReport)> {
    let step = 1.0 / levels as f64;
    let n = levels + 1;
    let h2 = H2Table::new();

    let ps0 = ch.state_prior().get(0);
    let ps1 = ch.state_prior().get(1);
    // p(y_r = 0 | x, s), p(y_e = 0 | x, s)
    let ar: [f64; 2] = [ch.p_yr_given(0, 0, 0), ch.p_yr_given(0, 1, 0)];
    let br: [f64; 2] = [ch.p_yr_given(1, 0, 0), ch.p_yr_given(1, 1, 0)];
    let ae: [f64; 2] = [ch.p_ye_given(0, 0, 0), ch.p_ye_given(0, 1, 0)];
    let be: [f64; 2] = [ch.p_ye_given(1, 0, 0), ch.p_ye_given(1, 1, 0)];

    // outer grid over (a, b); the u₀↔u₁ relabeling maps (a,b) to (1−a,1−b),
    // so only a ≤ 1/2 is enumerated.
    let outer: Vec<(usize, usize)> = (0..n)
        .flat_map(|ia| (0..n).map(move |ib| (ia, ib)))
        .filter(|&(ia, _)| 2 * ia <= levels)
        .collect();

    // Per-u summaries in structure-of-arrays form. Entry k = i0·n + i1 maps
    // to x-rows (c0, c1) = (i0·step, i1·step).
    struct Side {
        mr: Vec<f64>, // w_u · p(y_r=0|u)
        me: Vec<f64>,
        hr: Vec<f64>, // w_u · h2(p(y_r=0|u))
        he: Vec<f64>,
    }

    let best = outer
        .par_iter()
        .map(|&(ia, ib)| {
            let a = ia as f64 * step;
            let b = ib as f64 * step;
            let pu0 = ps0 * a + ps1 * b;
            let pu1 = 1.0 - pu0;
            // I(U;S) is fixed by (a, b)
            let i_u_s =
                binary_entropy(pu0) - ps0 * binary_entropy(a) - ps1 * binary_entropy(b);

            let make = |w: f64, ps_u: [f64; 2]| -> Side {
                let mut side = Side {
                    mr: Vec::with_capacity(n * n),
                    me: Vec::with_capacity(n * n),
                    hr: Vec::with_capacity(n * n),
                    he: Vec::with_capacity(n * n),
                };
                for i0 in 0..n {
                    let c0 = i0 as f64 * step;
                    let r0 = c0 * ar[0] + (1.0 - c0) * br[0];
                    let e0 = c0 * ae[0] + (1.0 - c0) * be[0];
                    for i1 in 0..n {
                        let c1 = i1 as f64 * step;
                        let r = ps_u[0] * r0 + ps_u[1] * (c1 * ar[1] + (1.0 - c1) * br[1]);
                        let e = ps_u[0] * e0 + ps_u[1] * (c1 * ae[1] + (1.0 - c1) * be[1]);
                        side.mr.push(w * r);
                        side.me.push(w * e);
                        side.hr.push(w * binary_entropy(r));
                        side.he.push(w * binary_entropy(e));
                    }
                }
                side
            };

            // p(s|u): guard zero-mass u (then the conditional is irrelevant)
            let psu0 = if pu0 > 0.0 {
                [ps0 * a / pu0, ps1 * b / pu0]
            } else {
                [0.5, 0.5]
            };
            let psu1 = if pu1 > 0.0 {
                [ps0 * (1.0 - a) / pu1, ps1 * (1.0 - b) / pu1]
            } else {
                [0.5, 0.5]
            };
            let s0 = make(pu0, psu0);
            let s1 = make(pu1, psu1);

            let m = n * n;
            let mut best_v = f64::NEG_INFINITY;
            let mut best_idx = (0usize, 0usize);
            for i in 0..m {
                let (mri, mei, hri, hei) = (s0.mr[i], s0.me[i], s0.hr[i], s0.he[i]);
                for j in 0..m {
                    let i_u_yr = h2.get(mri + s1.mr[j]) - hri - s1.hr[j];
                    let i_u_ye = h2.get(mei + s1.me[j]) - hei - s1.he[j];
                    let v = match obj {
                        Objective::LowerBound => {
                            if i_u_yr < i_u_s - FEASIBILITY_TOL {
                                continue;
                            }
                            i_u_yr - i_u_ye
                        }
                        Objective::SecretMessage => i_u_yr - i_u_s.max(i_u_ye),
                        // routed to the generic path by the caller
                        Objective::Symmetric => unreachable!(),
                    };
                    if v > best_v {
                        best_v = v;
                        best_idx = (i, j);
                    }
                }
            }
            (best_v, ia, ib, best_idx.0, best_idx.1)
        })
        .collect::<Vec<_>>();

    // deterministic reduction in outer-grid order
    let mut top: Option<(f64, usize, usize, usize, usize)> = None;
    for cand in best {
        if top.as_ref().map_or(true, |t| cand.0 > t.0) {
            top = Some(cand);
        }
    }
    let (_, ia, ib, k0, k1) = top.ok_or_else(|| Error::numeric("no feasible grid point"))?;

    let a = ia as f64 * step;
    let b = ib as f64 * step;
    let cv = |k: usize| k as f64 * step;
    let policy = AuxiliaryPolicy::new(
        Kernel::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]])?,
        Kernel::new(vec![
            vec![cv(k0 / n), 1.0 - cv(k0 / n)],
            vec![cv(k0 % n), 1.0 - cv(k0 % n)],
            vec![cv(k1 / n), 1.0 - cv(k1 / n)],
            vec![cv(k1 % n), 1.0 - cv(k1 % n)],
        ])?,
    )?;
    let report = report_of(ch, &policy, obj)?;
    Ok((policy, report))
}

/// Lookup table for h₂ with linear interpolation; exact evaluation near the
/// endpoints where the interpolation error would grow.
struct H2Table {
    vals: Vec<f64>,
}

const H2_TABLE_BITS: usize = 17;
const H2_EDGE: f64 = 1e-3;

impl H2Table {
    fn new() -> Self {
        let n = (1usize << H2_TABLE_BITS) + 1;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            vals.push(binary_entropy(i as f64 / (n - 1) as f64));
        }
        H2Table { vals }
    }

    #[inline]
    fn get(&self, p: f64) -> f64 {
        if p < H2_EDGE || p > 1.0 - H2_EDGE {
            return binary_entropy(p.clamp(0.0, 1.0));
        }
        let scale = (self.vals.len() - 1) as f64;
        let t = p * scale;
        let i = t as usize;
        let frac = t - i as f64;
        self.vals[i] * (1.0 - frac) + self.vals[i + 1] * frac
    }
}
