//! State-dependent wiretap channel model and the side-information folding
//! reduction.
//!
//! A [`StateWiretapChannel`] is an i.i.d. state prior p(s) together with a
//! transition kernel p(y_r, y_e | x, s) over finite alphabets. Index
//! conventions are row-major throughout: transition row `x·|S| + s`, output
//! cell `y_r·|Y_e| + y_e`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{JointDist, Kernel, ProbVector, Violation};

#[derive(Debug, Clone, PartialEq)]
pub struct StateWiretapChannel {
    state_prior: ProbVector,
    transition: Kernel,
    nx: usize,
    ns: usize,
    nyr: usize,
    nye: usize,
    // cached marginal kernels, row (x,s)
    p_yr: Vec<f64>,
    p_ye: Vec<f64>,
}

impl StateWiretapChannel {
    /// `transition` rows are indexed by `x·ns + s`; outputs by `y_r·nye + y_e`.
    pub fn new(
        state_prior: ProbVector,
        transition: Kernel,
        nx: usize,
        nyr: usize,
        nye: usize,
    ) -> Result<Self> {
        let ns = state_prior.len();
        if nx == 0 || nyr == 0 || nye == 0 {
            return Err(Error::argument("alphabet sizes must be positive"));
        }
        if transition.num_rows() != nx * ns {
            return Err(Error::argument(format!(
                "transition has {} rows, expected |X|·|S| = {}",
                transition.num_rows(),
                nx * ns
            )));
        }
        if transition.out_size() != nyr * nye {
            return Err(Error::argument(format!(
                "transition rows have {} entries, expected |Yr|·|Ye| = {}",
                transition.out_size(),
                nyr * nye
            )));
        }
        let mut p_yr = vec![0.0; nx * ns * nyr];
        let mut p_ye = vec![0.0; nx * ns * nye];
        for row in 0..nx * ns {
            for yr in 0..nyr {
                for ye in 0..nye {
                    let p = transition.prob(row, yr * nye + ye);
                    p_yr[row * nyr + yr] += p;
                    p_ye[row * nye + ye] += p;
                }
            }
        }
        Ok(StateWiretapChannel {
            state_prior,
            transition,
            nx,
            ns,
            nyr,
            nye,
            p_yr,
            p_ye,
        })
    }

    pub fn ns(&self) -> usize {
        self.ns
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nyr(&self) -> usize {
        self.nyr
    }
    pub fn nye(&self) -> usize {
        self.nye
    }

    pub fn state_prior(&self) -> &ProbVector {
        &self.state_prior
    }

    pub fn transition(&self) -> &Kernel {
        &self.transition
    }

    #[inline]
    pub fn row_index(&self, x: usize, s: usize) -> usize {
        x * self.ns + s
    }

    /// p(y_r, y_e | x, s)
    #[inline]
    pub fn p_out(&self, x: usize, s: usize, yr: usize, ye: usize) -> f64 {
        self.transition.prob(self.row_index(x, s), yr * self.nye + ye)
    }

    /// Marginal p(y_r | x, s)
    #[inline]
    pub fn p_yr_given(&self, x: usize, s: usize, yr: usize) -> f64 {
        self.p_yr[self.row_index(x, s) * self.nyr + yr]
    }

    /// Marginal p(y_e | x, s)
    #[inline]
    pub fn p_ye_given(&self, x: usize, s: usize, ye: usize) -> f64 {
        self.p_ye[self.row_index(x, s) * self.nye + ye]
    }

    /// Composes the eavesdropper output with a symmetric erasure of the given
    /// probability. The new Y_e alphabet has one extra symbol (the erasure).
    pub fn degrade_eavesdropper(&self, erasure: f64) -> Result<StateWiretapChannel> {
        if !(0.0..=1.0).contains(&erasure) {
            return Err(Error::argument("erasure probability must be in [0,1]"));
        }
        let nye2 = self.nye + 1;
        let mut rows = Vec::with_capacity(self.nx * self.ns);
        for row in 0..self.nx * self.ns {
            let mut out = vec![0.0; self.nyr * nye2];
            for yr in 0..self.nyr {
                for ye in 0..self.nye {
                    let p = self.transition.prob(row, yr * self.nye + ye);
                    out[yr * nye2 + ye] += p * (1.0 - erasure);
                    out[yr * nye2 + self.nye] += p * erasure;
                }
            }
            rows.push(out);
        }
        StateWiretapChannel::new(
            self.state_prior.clone(),
            Kernel::new(rows)?,
            self.nx,
            self.nyr,
            nye2,
        )
    }
}

/// The optimization variable of the capacity bounds: p(u|s) and p(x|u,s).
///
/// `p_u_given_s` rows are indexed by s; `p_x_given_us` rows by `u·|S| + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryPolicy {
    p_u_given_s: Kernel,
    p_x_given_us: Kernel,
}

impl AuxiliaryPolicy {
    pub fn new(p_u_given_s: Kernel, p_x_given_us: Kernel) -> Result<Self> {
        let ns = p_u_given_s.num_rows();
        let nu = p_u_given_s.out_size();
        if p_x_given_us.num_rows() != nu * ns {
            return Err(Error::argument(format!(
                "p(x|u,s) has {} rows, expected |U|·|S| = {}",
                p_x_given_us.num_rows(),
                nu * ns
            )));
        }
        Ok(AuxiliaryPolicy {
            p_u_given_s,
            p_x_given_us,
        })
    }

    /// U independent of S and X drawn from `p_x` regardless of (u,s): the
    /// trivial always-feasible policy.
    pub fn independent(ns: usize, nu: usize, p_x: &ProbVector) -> Self {
        AuxiliaryPolicy {
            p_u_given_s: Kernel::constant(ns, &ProbVector::uniform(nu)),
            p_x_given_us: Kernel::constant(nu * ns, p_x),
        }
    }

    pub fn ns(&self) -> usize {
        self.p_u_given_s.num_rows()
    }
    pub fn nu(&self) -> usize {
        self.p_u_given_s.out_size()
    }
    pub fn nx(&self) -> usize {
        self.p_x_given_us.out_size()
    }

    #[inline]
    pub fn p_u(&self, s: usize, u: usize) -> f64 {
        self.p_u_given_s.prob(s, u)
    }

    #[inline]
    pub fn p_x(&self, u: usize, s: usize, x: usize) -> f64 {
        self.p_x_given_us.prob(u * self.ns() + s, x)
    }

    pub fn p_u_given_s(&self) -> &Kernel {
        &self.p_u_given_s
    }

    pub fn p_x_given_us(&self) -> &Kernel {
        &self.p_x_given_us
    }

    /// Marginal p(u) = Σ_s p(s) p(u|s).
    pub fn u_marginal(&self, prior: &ProbVector) -> Result<ProbVector> {
        if prior.len() != self.ns() {
            return Err(Error::argument("state prior size mismatch"));
        }
        let mut p = vec![0.0; self.nu()];
        for s in 0..self.ns() {
            for u in 0..self.nu() {
                p[u] += prior.get(s) * self.p_u(s, u);
            }
        }
        ProbVector::normalized(p)
    }

    /// Default auxiliary-alphabet size |S|(1+|X|).
    pub fn default_u_size(ns: usize, nx: usize) -> usize {
        ns * (1 + nx)
    }
}

/// p(s,u,x,y_r,y_e) = p(s) p(u|s) p(x|u,s) p(y_r,y_e|x,s), with axes
/// labeled (s, u, x, y_r, y_e) in that order.
pub fn induced_joint(ch: &StateWiretapChannel, pol: &AuxiliaryPolicy) -> Result<JointDist> {
    if pol.ns() != ch.ns() || pol.nx() != ch.nx() {
        return Err(Error::argument(format!(
            "policy alphabets (|S|={}, |X|={}) do not match channel (|S|={}, |X|={})",
            pol.ns(),
            pol.nx(),
            ch.ns(),
            ch.nx()
        )));
    }
    let (ns, nu, nx, nyr, nye) = (ch.ns(), pol.nu(), ch.nx(), ch.nyr(), ch.nye());
    let mut table = vec![0.0; ns * nu * nx * nyr * nye];
    let mut i = 0;
    for s in 0..ns {
        let ps = ch.state_prior().get(s);
        for u in 0..nu {
            let psu = ps * pol.p_u(s, u);
            for x in 0..nx {
                let psux = psu * pol.p_x(u, s, x);
                for yr in 0..nyr {
                    for ye in 0..nye {
                        table[i] = psux * ch.p_out(x, s, yr, ye);
                        i += 1;
                    }
                }
            }
        }
    }
    JointDist::new(table, vec![ns, nu, nx, nyr, nye], &["s", "u", "x", "y_r", "y_e"])
}

/// Which terminal sees a state component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRole {
    Transmitter,
    Receiver,
    Eavesdropper,
    Hidden,
}

/// A state decomposed as s = (s_t, s_r, s_e, s_0): transmitter, receiver and
/// eavesdropper side information plus a hidden component. Stored canonically
/// in that axis order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedState {
    joint: JointDist,
}

impl DecomposedState {
    /// Joint table over (s_t, s_r, s_e, s_0) in canonical order.
    pub fn from_joint(table: Vec<f64>, dims: [usize; 4]) -> Result<Self> {
        let joint = JointDist::new(table, dims.to_vec(), &["s_t", "s_r", "s_e", "s_0"])?;
        Ok(DecomposedState { joint })
    }

    /// Joint supplied with axes in arbitrary order; `roles` says which role
    /// each supplied axis plays. Every role must appear exactly once.
    pub fn from_joint_with_roles(
        table: Vec<f64>,
        dims: [usize; 4],
        roles: [StateRole; 4],
    ) -> Result<Self> {
        use StateRole::*;
        let mut perm = [usize::MAX; 4]; // canonical axis -> supplied axis
        for (axis, role) in roles.iter().enumerate() {
            let slot = match role {
                Transmitter => 0,
                Receiver => 1,
                Eavesdropper => 2,
                Hidden => 3,
            };
            if perm[slot] != usize::MAX {
                return Err(Error::argument(format!("role {role:?} assigned twice")));
            }
            perm[slot] = axis;
        }
        let supplied = JointDist::new(table, dims.to_vec(), &["a", "b", "c", "d"])?;
        let reordered = supplied.marginalize(&perm)?; // permutation of all axes
        DecomposedState::from_joint(reordered.table().to_vec(), [
            dims[perm[0]],
            dims[perm[1]],
            dims[perm[2]],
            dims[perm[3]],
        ])
    }

    /// Mutually independent components.
    pub fn independent(priors: [&ProbVector; 4]) -> Result<Self> {
        let dims = [
            priors[0].len(),
            priors[1].len(),
            priors[2].len(),
            priors[3].len(),
        ];
        let joint = JointDist::from_fn(dims.to_vec(), &["s_t", "s_r", "s_e", "s_0"], |ix| {
            priors[0].get(ix[0]) * priors[1].get(ix[1]) * priors[2].get(ix[2]) * priors[3].get(ix[3])
        })?;
        Ok(DecomposedState { joint })
    }

    pub fn dims(&self) -> [usize; 4] {
        [
            self.joint.dims()[0],
            self.joint.dims()[1],
            self.joint.dims()[2],
            self.joint.dims()[3],
        ]
    }

    pub fn prob(&self, st: usize, sr: usize, se: usize, s0: usize) -> f64 {
        self.joint.prob(&[st, sr, se, s0])
    }

    /// Composite-state size |S_t|·|S_r|·|S_e|·|S_0|.
    pub fn composite_size(&self) -> usize {
        self.dims().iter().product()
    }

    /// Row-major composite index of (s_t, s_r, s_e, s_0).
    pub fn composite_index(&self, st: usize, sr: usize, se: usize, s0: usize) -> usize {
        let [_, nr, ne, n0] = self.dims();
        ((st * nr + sr) * ne + se) * n0 + s0
    }

    /// Marginal over the transmitter component.
    pub fn transmitter_prior(&self) -> Result<ProbVector> {
        let m = self.joint.marginalize(&[0])?;
        ProbVector::new(m.table().to_vec())
    }

    /// The composite joint as a prior over the flattened state.
    pub fn composite_prior(&self) -> Result<ProbVector> {
        ProbVector::new(self.joint.table().to_vec())
    }
}

/// A channel whose state carries the four-way decomposition, before folding.
/// Transition rows are indexed by `x·|S| + composite(s_t,s_r,s_e,s_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedChannel {
    pub transition: Kernel,
    pub state: DecomposedState,
    pub nx: usize,
    pub nyr: usize,
    pub nye: usize,
}

impl DecomposedChannel {
    pub fn new(
        transition: Kernel,
        state: DecomposedState,
        nx: usize,
        nyr: usize,
        nye: usize,
    ) -> Result<Self> {
        if transition.num_rows() != nx * state.composite_size() {
            return Err(Error::argument(format!(
                "transition has {} rows, expected |X|·|S| = {}",
                transition.num_rows(),
                nx * state.composite_size()
            )));
        }
        if transition.out_size() != nyr * nye {
            return Err(Error::argument("transition output size mismatch"));
        }
        Ok(DecomposedChannel {
            transition,
            state,
            nx,
            nyr,
            nye,
        })
    }

    /// The equivalent plain channel seen by the bounds: state s̄ = s_t,
    /// outputs ȳ_r = (y_r, s_r) and ȳ_e = (y_e, s_e), with
    /// p(ȳ_r, ȳ_e | s_t, x) = Σ_{s_0} p(y_r,y_e|x,s) p(s_r,s_e,s_0|s_t).
    ///
    /// Product outputs are flattened row-major: ȳ_r = y_r·|S_r| + s_r and
    /// ȳ_e = y_e·|S_e| + s_e.
    pub fn fold(&self) -> Result<StateWiretapChannel> {
        let [nt, nr, ne, n0] = self.state.dims();
        let (nx, nyr, nye) = (self.nx, self.nyr, self.nye);
        let prior_t = self.state.transmitter_prior()?;
        let nyr_f = nyr * nr;
        let nye_f = nye * ne;

        let mut rows = Vec::with_capacity(nx * nt);
        for x in 0..nx {
            for st in 0..nt {
                let pt = prior_t.get(st);
                let mut out = vec![0.0; nyr_f * nye_f];
                for sr in 0..nr {
                    for se in 0..ne {
                        for s0 in 0..n0 {
                            // p(s_r, s_e, s_0 | s_t); zero-mass transmitter states
                            // get a uniform stand-in so the row stays a pmf.
                            let cond = if pt > 0.0 {
                                self.state.prob(st, sr, se, s0) / pt
                            } else {
                                1.0 / (nr * ne * n0) as f64
                            };
                            if cond == 0.0 {
                                continue;
                            }
                            let row = x * self.state.composite_size()
                                + self.state.composite_index(st, sr, se, s0);
                            for yr in 0..nyr {
                                for ye in 0..nye {
                                    let p = self.transition.prob(row, yr * nye + ye);
                                    if p == 0.0 {
                                        continue;
                                    }
                                    let yrf = yr * nr + sr;
                                    let yef = ye * ne + se;
                                    out[yrf * nye_f + yef] += cond * p;
                                }
                            }
                        }
                    }
                }
                rows.push(out);
            }
        }
        StateWiretapChannel::new(prior_t, Kernel::new(rows)?, nx, nyr_f, nye_f)
    }
}

/// Folds side information into the outputs per the extended-model reduction.
pub fn fold_side_information(base: &DecomposedChannel) -> Result<StateWiretapChannel> {
    base.fold()
}

/// The symmetric-CSI reduction: reveal the full state to the receiver, i.e.
/// fold with s_t = s_r = s and degenerate s_e, s_0. The folded receiver
/// output is ȳ_r = y_r·|S| + s.
pub fn reveal_state_to_receiver(ch: &StateWiretapChannel) -> Result<StateWiretapChannel> {
    let ns = ch.ns();
    // joint p(s_t, s_r) concentrated on the diagonal
    let mut table = vec![0.0; ns * ns];
    for s in 0..ns {
        table[s * ns + s] = ch.state_prior().get(s);
    }
    let state = DecomposedState::from_joint(table, [ns, ns, 1, 1])?;

    // base transition over the composite state (s_t, s_r, ·, ·); only the
    // diagonal rows matter but all rows must be valid.
    let mut rows = Vec::with_capacity(ch.nx() * ns * ns);
    for x in 0..ch.nx() {
        for st in 0..ns {
            for _sr in 0..ns {
                rows.push(ch.transition().row(ch.row_index(x, st)).to_vec());
            }
        }
    }
    let base = DecomposedChannel::new(Kernel::new(rows)?, state, ch.nx(), ch.nyr(), ch.nye())?;
    base.fold()
}

/// Splits a flattened product-output index back into (base symbol, side info).
pub fn split_output_index(idx: usize, side_size: usize) -> (usize, usize) {
    (idx / side_size, idx % side_size)
}

// ---------------------------------------------------------------------------
// JSON schemas consumed by the CLI
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphabetSizes {
    pub s: usize,
    pub x: usize,
    pub y_r: usize,
    pub y_e: usize,
}

/// On-disk channel description: `transition[x][s][y_r][y_e]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub state_prior: Vec<f64>,
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub alphabet_sizes: AlphabetSizes,
}

impl ChannelSpec {
    pub fn build(&self) -> Result<StateWiretapChannel> {
        let a = &self.alphabet_sizes;
        if self.state_prior.len() != a.s {
            return Err(Error::argument(format!(
                "state_prior has {} entries, alphabet_sizes.s = {}",
                self.state_prior.len(),
                a.s
            )));
        }
        if self.transition.len() != a.x {
            return Err(Error::argument("transition outer dimension must be |X|"));
        }
        let mut rows = Vec::with_capacity(a.x * a.s);
        for (x, per_s) in self.transition.iter().enumerate() {
            if per_s.len() != a.s {
                return Err(Error::argument(format!("transition[{x}] must have |S| entries")));
            }
            for (s, per_yr) in per_s.iter().enumerate() {
                if per_yr.len() != a.y_r {
                    return Err(Error::argument(format!(
                        "transition[{x}][{s}] must have |Yr| entries"
                    )));
                }
                let mut row = Vec::with_capacity(a.y_r * a.y_e);
                for per_ye in per_yr {
                    if per_ye.len() != a.y_e {
                        return Err(Error::argument(format!(
                            "transition[{x}][{s}][·] must have |Ye| entries"
                        )));
                    }
                    row.extend_from_slice(per_ye);
                }
                rows.push(row);
            }
        }
        StateWiretapChannel::new(
            ProbVector::new(self.state_prior.clone())?,
            Kernel::new(rows)?,
            a.x,
            a.y_r,
            a.y_e,
        )
    }

    pub fn from_channel(ch: &StateWiretapChannel) -> Self {
        let transition = (0..ch.nx())
            .map(|x| {
                (0..ch.ns())
                    .map(|s| {
                        (0..ch.nyr())
                            .map(|yr| (0..ch.nye()).map(|ye| ch.p_out(x, s, yr, ye)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ChannelSpec {
            state_prior: ch.state_prior().as_slice().to_vec(),
            transition,
            alphabet_sizes: AlphabetSizes {
                s: ch.ns(),
                x: ch.nx(),
                y_r: ch.nyr(),
                y_e: ch.nye(),
            },
        }
    }
}

/// On-disk policy description: `p_u_given_s[s][u]`, `p_x_given_us[u][s][x]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySpec {
    pub p_u_given_s: Vec<Vec<f64>>,
    pub p_x_given_us: Vec<Vec<Vec<f64>>>,
}

impl PolicySpec {
    pub fn build(&self) -> Result<AuxiliaryPolicy> {
        let ns = self.p_u_given_s.len();
        if ns == 0 {
            return Err(Error::Validation(Violation::Empty));
        }
        let nu = self.p_u_given_s[0].len();
        if self.p_x_given_us.len() != nu {
            return Err(Error::argument(format!(
                "p_x_given_us has {} u-slices, expected |U| = {nu}",
                self.p_x_given_us.len()
            )));
        }
        let mut x_rows = Vec::with_capacity(nu * ns);
        for (u, per_s) in self.p_x_given_us.iter().enumerate() {
            if per_s.len() != ns {
                return Err(Error::argument(format!(
                    "p_x_given_us[{u}] must have |S| = {ns} rows"
                )));
            }
            for row in per_s {
                x_rows.push(row.clone());
            }
        }
        AuxiliaryPolicy::new(Kernel::new(self.p_u_given_s.clone())?, Kernel::new(x_rows)?)
    }

    pub fn from_policy(pol: &AuxiliaryPolicy) -> Self {
        PolicySpec {
            p_u_given_s: (0..pol.ns())
                .map(|s| (0..pol.nu()).map(|u| pol.p_u(s, u)).collect())
                .collect(),
            p_x_given_us: (0..pol.nu())
                .map(|u| {
                    (0..pol.ns())
                        .map(|s| (0..pol.nx()).map(|x| pol.p_x(u, s, x)).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

/// On-disk decomposed-channel description for the fold subcommand:
/// `transition[x][s_t][s_r][s_e][s_0][y_r][y_e]`, components sized by
/// `component_sizes = [|S_t|, |S_r|, |S_e|, |S_0|]`. Either `state_joint`
/// (nested `[s_t][s_r][s_e][s_0]`) or `component_priors` must be given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposedSpec {
    pub component_sizes: [usize; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_joint: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component_priors: Option<[Vec<f64>; 4]>,
    pub transition: Vec<Vec<Vec<Vec<Vec<Vec<Vec<f64>>>>>>>,
    pub nyr: usize,
    pub nye: usize,
}

impl DecomposedSpec {
    pub fn build(&self) -> Result<DecomposedChannel> {
        let [nt, nr, ne, n0] = self.component_sizes;
        let state = match (&self.state_joint, &self.component_priors) {
            (Some(joint), _) => {
                let mut table = Vec::with_capacity(nt * nr * ne * n0);
                for a in joint {
                    for b in a {
                        for c in b {
                            table.extend_from_slice(c);
                        }
                    }
                }
                DecomposedState::from_joint(table, self.component_sizes)?
            }
            (None, Some(priors)) => {
                let ps: Vec<ProbVector> = priors
                    .iter()
                    .map(|p| ProbVector::new(p.clone()))
                    .collect::<Result<_>>()?;
                DecomposedState::independent([&ps[0], &ps[1], &ps[2], &ps[3]])?
            }
            (None, None) => {
                return Err(Error::argument(
                    "either state_joint or component_priors is required",
                ))
            }
        };
        let nx = self.transition.len();
        let mut rows = Vec::with_capacity(nx * nt * nr * ne * n0);
        for per_x in &self.transition {
            if per_x.len() != nt {
                return Err(Error::argument("transition s_t dimension mismatch"));
            }
            for per_t in per_x {
                if per_t.len() != nr {
                    return Err(Error::argument("transition s_r dimension mismatch"));
                }
                for per_r in per_t {
                    if per_r.len() != ne {
                        return Err(Error::argument("transition s_e dimension mismatch"));
                    }
                    for per_e in per_r {
                        if per_e.len() != n0 {
                            return Err(Error::argument("transition s_0 dimension mismatch"));
                        }
                        for per_0 in per_e {
                            if per_0.len() != self.nyr {
                                return Err(Error::argument("transition y_r dimension mismatch"));
                            }
                            let mut row = Vec::with_capacity(self.nyr * self.nye);
                            for per_yr in per_0 {
                                if per_yr.len() != self.nye {
                                    return Err(Error::argument(
                                        "transition y_e dimension mismatch",
                                    ));
                                }
                                row.extend_from_slice(per_yr);
                            }
                            rows.push(row);
                        }
                    }
                }
            }
        }
        DecomposedChannel::new(Kernel::new(rows)?, state, nx, self.nyr, self.nye)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bsc_pair(p_r: f64, p_e: f64) -> StateWiretapChannel {
        // |S| = 1, binary input, Y_r = BSC(p_r)(X), Y_e = BSC(p_e)(X) independent.
        let mut rows = Vec::new();
        for x in 0..2usize {
            let mut row = vec![0.0; 4];
            for yr in 0..2usize {
                for ye in 0..2usize {
                    let pr = if yr == x { 1.0 - p_r } else { p_r };
                    let pe = if ye == x { 1.0 - p_e } else { p_e };
                    row[yr * 2 + ye] = pr * pe;
                }
            }
            rows.push(row);
        }
        StateWiretapChannel::new(
            ProbVector::uniform(1),
            Kernel::new(rows).unwrap(),
            2,
            2,
            2,
        )
        .unwrap()
    }

    fn uniform_bit_policy() -> AuxiliaryPolicy {
        // U uniform bit, X = U
        AuxiliaryPolicy::new(
            Kernel::new(vec![vec![0.5, 0.5]]).unwrap(),
            Kernel::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn induced_joint_matches_bruteforce_product() {
        // random-ish 2x2x2 instance, exact five-fold product oracle
        let prior = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let transition = Kernel::new(vec![
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.4, 0.1, 0.4, 0.1],
            vec![0.7, 0.1, 0.1, 0.1],
        ])
        .unwrap();
        let ch = StateWiretapChannel::new(prior, transition, 2, 2, 2).unwrap();
        let pol = AuxiliaryPolicy::new(
            Kernel::new(vec![vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap(),
            Kernel::new(vec![
                vec![0.9, 0.1],
                vec![0.3, 0.7],
                vec![0.5, 0.5],
                vec![0.1, 0.9],
            ])
            .unwrap(),
        )
        .unwrap();
        let j = induced_joint(&ch, &pol).unwrap();
        for s in 0..2 {
            for u in 0..2 {
                for x in 0..2 {
                    for yr in 0..2 {
                        for ye in 0..2 {
                            let expect = ch.state_prior().get(s)
                                * pol.p_u(s, u)
                                * pol.p_x(u, s, x)
                                * ch.p_out(x, s, yr, ye);
                            let got = j.prob(&[s, u, x, yr, ye]);
                            assert!((expect - got).abs() < 1e-15);
                        }
                    }
                }
            }
        }
        // state marginal equals the prior exactly
        let ms = j.marginalize(&[0]).unwrap();
        assert!((ms.prob(&[0]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn induced_joint_deterministic_diagonal() {
        // u = s, x = u on a 2-state channel: joint supported on s = u = x
        let prior = ProbVector::uniform(2);
        let transition = Kernel::constant(4, &ProbVector::uniform(4));
        let ch = StateWiretapChannel::new(prior, transition, 2, 2, 2).unwrap();
        let pol = AuxiliaryPolicy::new(Kernel::identity(2), {
            // p(x|u,s) = 1[x=u]
            Kernel::new(vec![
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0],
            ])
            .unwrap()
        })
        .unwrap();
        let j = induced_joint(&ch, &pol).unwrap();
        for s in 0..2 {
            for u in 0..2 {
                for x in 0..2 {
                    let m = j
                        .marginalize(&[0, 1, 2])
                        .unwrap()
                        .prob(&[s, u, x]);
                    if s == u && u == x {
                        assert!(m > 0.0);
                    } else {
                        assert_eq!(m, 0.0);
                    }
                }
            }
        }
        // independent-U policy has I(U;S) = 0
        let ind = AuxiliaryPolicy::independent(2, 3, &ProbVector::uniform(2));
        let j = induced_joint(&ch, &ind).unwrap();
        assert!(j.mutual_information(&[1], &[0]).unwrap() < 1e-12);
    }

    #[test]
    fn markov_chain_holds_in_induced_joint() {
        let ch = bsc_pair(0.1, 0.2);
        let pol = uniform_bit_policy();
        let j = induced_joint(&ch, &pol).unwrap();
        let i = j.conditional_mi(&[1], &[3, 4], &[0, 2]).unwrap();
        assert!(i < 1e-9, "I(U;Y|X,S) = {i}");
    }

    #[test]
    fn fold_degenerate_side_information_is_identity() {
        let ch = bsc_pair(0.1, 0.2);
        // decomposed state: s_t binary = the real state of a 2-state channel,
        // s_r, s_e, s_0 all degenerate
        let prior = ProbVector::new(vec![0.4, 0.6]).unwrap();
        let trivial = ProbVector::uniform(1);
        let state = DecomposedState::independent([&prior, &trivial, &trivial, &trivial]).unwrap();
        let mut rows = Vec::new();
        for x in 0..2 {
            for _st in 0..2 {
                // the BSC-pair rows, with st switching nothing
                rows.push(ch.transition().row(ch.row_index(x, 0)).to_vec());
            }
        }
        let base = DecomposedChannel::new(Kernel::new(rows).unwrap(), state, 2, 2, 2).unwrap();
        let folded = base.fold().unwrap();
        assert_eq!(folded.ns(), 2);
        assert_eq!(folded.nyr(), 2);
        assert_eq!(folded.nye(), 2);
        for x in 0..2 {
            for st in 0..2 {
                for yr in 0..2 {
                    for ye in 0..2 {
                        assert!(
                            (folded.p_out(x, st, yr, ye) - ch.p_out(x, 0, yr, ye)).abs() < 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn fold_matches_direct_enumeration_with_hidden_component() {
        // 2-state s_t, binary hidden s_0 correlated with s_t, degenerate s_r/s_e.
        let table = vec![
            // (st, s0): joint over [st][1][1][s0]
            0.1, 0.3, // st=0
            0.4, 0.2, // st=1
        ];
        let state = DecomposedState::from_joint(table, [2, 1, 1, 2]).unwrap();
        // transition depends on (x, st, s0)
        let mut rows = Vec::new();
        for x in 0..2 {
            for st in 0..2 {
                for s0 in 0..2 {
                    let bias = 0.1 + 0.2 * x as f64 + 0.15 * st as f64 + 0.3 * s0 as f64;
                    let mut row = vec![0.0; 4];
                    for yr in 0..2 {
                        for ye in 0..2 {
                            let pr = if yr == 0 { 1.0 - bias } else { bias };
                            let pe = if ye == 0 { 0.5 + bias / 4.0 } else { 0.5 - bias / 4.0 };
                            row[yr * 2 + ye] = pr * pe;
                        }
                    }
                    rows.push(row);
                }
            }
        }
        let base = DecomposedChannel::new(Kernel::new(rows).unwrap(), state, 2, 2, 2).unwrap();
        let folded = base.fold().unwrap();

        // direct enumeration of p(yr, ye | st, x) = Σ_s0 p(yr,ye|x,st,s0) p(s0|st)
        let p_st = [0.4, 0.6];
        for x in 0..2 {
            for st in 0..2 {
                let mut sum = 0.0;
                for yr in 0..2 {
                    for ye in 0..2 {
                        let mut expect = 0.0;
                        for s0 in 0..2 {
                            let joint = base.state.prob(st, 0, 0, s0);
                            let row = x * 4 + base.state.composite_index(st, 0, 0, s0);
                            expect += joint / p_st[st] * base.transition.prob(row, yr * 2 + ye);
                        }
                        let got = folded.p_out(x, st, yr, ye);
                        assert!((expect - got).abs() < 1e-12);
                        sum += got;
                    }
                }
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reveal_state_makes_state_decodable() {
        // 2-state channel; after folding, ȳ_r determines s, so H(S|Ȳr) = 0
        let prior = ProbVector::new(vec![0.35, 0.65]).unwrap();
        let transition = Kernel::new(vec![
            vec![0.2, 0.3, 0.1, 0.4],
            vec![0.3, 0.3, 0.2, 0.2],
            vec![0.5, 0.1, 0.2, 0.2],
            vec![0.1, 0.1, 0.4, 0.4],
        ])
        .unwrap();
        let ch = StateWiretapChannel::new(prior, transition, 2, 2, 2).unwrap();
        let folded = reveal_state_to_receiver(&ch).unwrap();
        assert_eq!(folded.nyr(), 4);
        assert_eq!(folded.nye(), 2);

        let pol = AuxiliaryPolicy::independent(2, 2, &ProbVector::uniform(2));
        let j = induced_joint(&folded, &pol).unwrap();
        // H(S|Ȳr) = H(S,Ȳr) − H(Ȳr) = 0
        let h_s_yr = j.entropy_of(&[0, 3]).unwrap();
        let h_yr = j.entropy_of(&[3]).unwrap();
        assert!((h_s_yr - h_yr).abs() < 1e-9);
    }

    #[test]
    fn fold_preserves_secrecy_relevant_marginals() {
        // I(U; Ȳr) on the folded channel equals I(U; Yr, S_r) enumerated on the
        // unfolded model, for a nontrivial policy.
        let p_t = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let p_r = ProbVector::new(vec![0.6, 0.4]).unwrap();
        let trivial = ProbVector::uniform(1);
        let state = DecomposedState::independent([&p_t, &p_r, &trivial, &trivial]).unwrap();
        let mut rows = Vec::new();
        for x in 0..2 {
            for st in 0..2 {
                for sr in 0..2 {
                    let b = 0.05 + 0.25 * x as f64 + 0.2 * st as f64 + 0.1 * sr as f64;
                    let mut row = vec![0.0; 4];
                    for yr in 0..2 {
                        for ye in 0..2 {
                            let pr = if yr == 0 { 1.0 - b } else { b };
                            let pe = if ye == 0 { 0.5 + b / 3.0 } else { 0.5 - b / 3.0 };
                            row[yr * 2 + ye] = pr * pe;
                        }
                    }
                    rows.push(row);
                }
            }
        }
        let base = DecomposedChannel::new(Kernel::new(rows).unwrap(), state, 2, 2, 2).unwrap();
        let folded = base.fold().unwrap();

        let pol = AuxiliaryPolicy::new(
            Kernel::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap(),
            Kernel::new(vec![
                vec![0.9, 0.1],
                vec![0.2, 0.8],
                vec![0.6, 0.4],
                vec![0.4, 0.6],
            ])
            .unwrap(),
        )
        .unwrap();

        let jf = induced_joint(&folded, &pol).unwrap();
        let i_folded = jf.mutual_information(&[1], &[3]).unwrap();

        // direct enumeration over (st, sr, u, x, yr): p = p(st)p(sr)p(u|st)p(x|u,st)p(yr|x,st,sr)
        let joint = JointDist::from_fn(
            vec![2, 2, 2, 2, 2],
            &["s_t", "s_r", "u", "x", "y_r"],
            |ix| {
                let (st, sr, u, x, yr) = (ix[0], ix[1], ix[2], ix[3], ix[4]);
                let row = x * 4 + base.state.composite_index(st, sr, 0, 0);
                let p_yr: f64 = (0..2).map(|ye| base.transition.prob(row, yr * 2 + ye)).sum();
                p_t.get(st) * p_r.get(sr) * pol.p_u(st, u) * pol.p_x(u, st, x) * p_yr
            },
        )
        .unwrap();
        let i_direct = joint.mutual_information(&[2], &[4, 1]).unwrap();
        assert!(
            (i_folded - i_direct).abs() < 1e-10,
            "folded {i_folded} vs direct {i_direct}"
        );
    }

    #[test]
    fn channel_spec_roundtrip() {
        let ch = bsc_pair(0.1, 0.2);
        let spec = ChannelSpec::from_channel(&ch);
        let back = spec.build().unwrap();
        assert_eq!(ch, back);
    }

    #[test]
    fn degrade_eavesdropper_is_valid_channel() {
        let ch = bsc_pair(0.1, 0.2);
        let d = ch.degrade_eavesdropper(0.3).unwrap();
        assert_eq!(d.nye(), 3);
        for x in 0..2 {
            let total: f64 = (0..d.nyr())
                .flat_map(|yr| (0..d.nye()).map(move |ye| (yr, ye)))
                .map(|(yr, ye)| d.p_out(x, 0, yr, ye))
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roles_permutation_is_canonicalized() {
        let pv = |v: Vec<f64>| ProbVector::new(v).unwrap();
        let pt = pv(vec![0.2, 0.8]);
        let pr = pv(vec![0.5, 0.5]);
        // supply axes as (receiver, transmitter, hidden, eavesdropper)
        let dims = [2usize, 2, 1, 1];
        let mut table = vec![0.0; 4];
        for r in 0..2 {
            for t in 0..2 {
                table[r * 2 + t] = pr.get(r) * pt.get(t);
            }
        }
        let d = DecomposedState::from_joint_with_roles(
            table,
            dims,
            [
                StateRole::Receiver,
                StateRole::Transmitter,
                StateRole::Hidden,
                StateRole::Eavesdropper,
            ],
        )
        .unwrap();
        assert_eq!(d.dims(), [2, 2, 1, 1]);
        assert!((d.prob(0, 1, 0, 0) - 0.2 * 0.5).abs() < 1e-12);
        assert!((d.transmitter_prior().unwrap().get(1) - 0.8).abs() < 1e-12);
        // duplicate role rejected
        assert!(DecomposedState::from_joint_with_roles(
            vec![1.0],
            [1, 1, 1, 1],
            [
                StateRole::Receiver,
                StateRole::Receiver,
                StateRole::Hidden,
                StateRole::Eavesdropper,
            ],
        )
        .is_err());
    }
}
