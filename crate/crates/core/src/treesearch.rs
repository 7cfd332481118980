//! Scorer-guided tree search for a `k`-support.
//!
//! Nodes are partial support estimates. Expansion adds the `q` best-scored
//! indices outside a node; pruning scores every new node by growing it to an
//! `(m−1)`-element extended support, re-selecting `k` indices by SBL ridge and
//! measuring the least-squares residual of that `k`-support, then keeps the
//! `g` best. Initialization seeds the running estimate from whichever of the
//! scorer and OMP fits `y` better.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::omp_path;
use crate::ensembles::SnrDb;
use crate::error::{Error, Result};
use crate::linalg::{
    check_rows, least_squares, residual_norm, residual_project, top_l, top_l_ranked, IndexSet, Scalar,
};
use crate::ridge::{k_support_select, sbl_ridge, SblConfig};
use crate::scorers::IndexScorer;

/// Residual threshold `max(‖y‖·10^(−snr/20), 1e−5)`.
pub fn epsilon_bar<T: Scalar>(y: &DVector<T>, snr: SnrDb) -> f64 {
    (y.norm() * snr.amplitude_ratio()).max(1e-5)
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn is_infinite(v: &f64) -> bool {
    v.is_infinite()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsnParams {
    /// Children per expanded node.
    pub q: usize,
    /// Survivors merged into one node when a stage keeps a single node.
    pub z: usize,
    pub epsilon: f64,
    pub stage_depths: Vec<usize>,
    pub stage_widths: Vec<usize>,
    /// Wall-clock budget in seconds.
    #[serde(default = "infinite", skip_serializing_if = "is_infinite")]
    pub t_max: f64,
    /// Return the `k`-support directly instead of thresholding at `ρ`.
    #[serde(default)]
    pub known_sparsity: bool,
}

impl TsnParams {
    fn preset(q: usize, epsilon: f64, depths: &[usize], widths: &[usize], t_max: f64) -> Self {
        TsnParams {
            q,
            z: 1,
            epsilon,
            stage_depths: depths.to_vec(),
            stage_widths: widths.to_vec(),
            t_max,
            known_sparsity: false,
        }
    }

    /// `(q, z, l, g, tMax) = (m, 1, (3,1), (60,1), ∞)`.
    pub fn tau1(m: usize, epsilon: f64) -> Self {
        Self::preset(m, epsilon, &[3, 1], &[60, 1], f64::INFINITY)
    }

    /// `(m, 1, (2,1,2,1), (60,1,60,1), ∞)`.
    pub fn tau2(m: usize, epsilon: f64) -> Self {
        Self::preset(m, epsilon, &[2, 1, 2, 1], &[60, 1, 60, 1], f64::INFINITY)
    }

    /// Same as [`TsnParams::tau2`] with a five-second budget.
    pub fn tau3(m: usize, epsilon: f64) -> Self {
        Self::preset(m, epsilon, &[2, 1, 2, 1], &[60, 1, 60, 1], 5.0)
    }

    pub fn validate(&self, k: usize, m: usize, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.q == 0 || self.z == 0 {
            return bad(format!("q and z must be positive, got q={} z={}", self.q, self.z));
        }
        if self.stage_depths.is_empty() || self.stage_depths.len() != self.stage_widths.len() {
            return bad(format!(
                "stage depths and widths must be nonempty and equally long, got {} and {}",
                self.stage_depths.len(),
                self.stage_widths.len()
            ));
        }
        if self.stage_depths.iter().chain(&self.stage_widths).any(|&v| v == 0) {
            return bad("stage depths and widths must be positive".into());
        }
        let total: usize = self.stage_depths.iter().sum();
        if total > k {
            return bad(format!("stage depths sum to {total}, more than k = {k}"));
        }
        if k == 0 || k + 2 > m {
            return bad(format!("need 1 <= k <= m - 2, got k={k} m={m}"));
        }
        if n + 1 < m {
            return bad(format!("need n >= m - 1, got m={m} n={n}"));
        }
        if !(self.epsilon >= 0.0) || !(self.t_max >= 0.0) {
            return bad("epsilon and t_max must be nonnegative".into());
        }
        Ok(())
    }

    /// Upper bound on expansion calls: `Σ_a g_(a−1) · Σ_(j=1..l_a) q^j` with `g_0 = 1`.
    pub fn expansion_bound(&self) -> f64 {
        let mut prev = 1.0;
        let mut total = 0.0;
        for (&l, &g) in self.stage_depths.iter().zip(&self.stage_widths) {
            let per_parent: f64 = (1..=l).map(|j| (self.q as f64).powi(j as i32)).sum();
            total += prev * per_parent;
            prev = g as f64;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub support: IndexSet,
    /// Residual of the node's `k`-support estimate; infinite only for the root.
    pub r: f64,
}

/// Nodes with pairwise distinct supports, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeFamily {
    nodes: Vec<Node>,
}

impl NodeFamily {
    pub fn new() -> Self {
        NodeFamily::default()
    }

    pub fn root() -> Self {
        NodeFamily {
            nodes: vec![Node {
                support: IndexSet::empty(),
                r: f64::INFINITY,
            }],
        }
    }

    /// Adds a node unless one with the same support is present.
    pub fn push(&mut self, node: Node) -> bool {
        if self.contains(&node.support) {
            return false;
        }
        self.nodes.push(node);
        true
    }

    pub fn contains(&self, support: &IndexSet) -> bool {
        self.nodes.iter().any(|n| &n.support == support)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    EpsilonHit,
    BudgetExhausted,
    TreeExhausted,
}

/// The running `k`-support estimate and its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub support: IndexSet,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub hit: bool,
    pub survivors: NodeFamily,
    /// The budget ran out before every new node was scored.
    pub interrupted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsnResult<T: Scalar> {
    pub support_estimate: IndexSet,
    pub signal_estimate: DVector<T>,
    pub k_support: IndexSet,
    pub residual: f64,
    pub terminated: Termination,
    pub elapsed_seconds: f64,
    pub nodes_expanded: usize,
    /// Incumbent residual after initialization and after every prune.
    pub residual_trace: Vec<f64>,
}

/// Everything a search step needs besides the nodes themselves.
pub struct SearchContext<'a, T: Scalar, S: ?Sized> {
    pub phi: &'a DMatrix<T>,
    pub y: &'a DVector<T>,
    pub k: usize,
    pub epsilon: f64,
    pub scorer: &'a S,
    pub ridge: SblConfig,
    deadline: Option<Instant>,
}

impl<'a, T: Scalar, S: IndexScorer<T> + ?Sized> SearchContext<'a, T, S> {
    pub fn new(
        phi: &'a DMatrix<T>,
        y: &'a DVector<T>,
        k: usize,
        epsilon: f64,
        scorer: &'a S,
        ridge: SblConfig,
    ) -> Result<Self> {
        check_rows(phi, y)?;
        let (m, n) = phi.shape();
        if k == 0 || k + 2 > m || n + 1 < m {
            return Err(Error::invalid(format!("need 1 <= k <= m - 2 and n >= m - 1, got k={k} m={m} n={n}")));
        }
        Ok(SearchContext {
            phi,
            y,
            k,
            epsilon,
            scorer,
            ridge,
            deadline: None,
        })
    }

    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() > d)
    }

    fn score(&self, residual: &DVector<T>) -> Result<Vec<f64>> {
        let v = self.scorer.score(self.phi, residual)?;
        if v.len() != self.phi.ncols() {
            return Err(Error::dims(format!(
                "scorer returned {} entries for {} columns",
                v.len(),
                self.phi.ncols()
            )));
        }
        Ok(v)
    }

    /// Children `Γ ∪ {z}` for the `min(n − |Γ|, q)` best-scored `z ∉ Γ`, best first.
    pub fn expand(&self, gamma: &IndexSet, q: usize) -> Result<Vec<IndexSet>> {
        let (m, n) = self.phi.shape();
        if gamma.len() >= m {
            return Err(Error::invalid(format!("cannot expand a node of size {} >= m", gamma.len())));
        }
        let (r, _) = residual_project(self.phi, gamma, self.y)?;
        let v = self.score(&r)?;
        let u = q.min(n - gamma.len());
        Ok(top_l_ranked(&v, u, gamma)?.into_iter().map(|z| gamma.with(z)).collect())
    }

    /// Grows `Π` to `m − 1` indices with the best-scored indices outside it.
    pub fn extended_support(&self, pi: &IndexSet) -> Result<IndexSet> {
        let m = self.phi.nrows();
        if pi.len() > m - 1 {
            return Err(Error::invalid(format!("partial support of size {} exceeds m - 1", pi.len())));
        }
        let (r, _) = residual_project(self.phi, pi, self.y)?;
        let v = self.score(&r)?;
        let extra = top_l_ranked(&v, m - 1 - pi.len(), pi)?;
        Ok(pi.union(&IndexSet::new(extra)))
    }

    /// Ridge on `psi`, keep the `k` largest coefficients, and return that set
    /// with its least-squares residual.
    pub fn k_estimate(&self, psi: &IndexSet) -> Result<(IndexSet, f64)> {
        let sol = sbl_ridge(self.phi, psi, self.y, &self.ridge)?;
        let omega = k_support_select(&sol, self.k)?;
        let r = residual_norm(self.phi, &omega, self.y)?;
        Ok((omega, r))
    }

    /// `k`-support estimate of a partial support through its extended support.
    pub fn node_estimate(&self, pi: &IndexSet) -> Result<(IndexSet, f64)> {
        self.k_estimate(&self.extended_support(pi)?)
    }

    /// Scores the new nodes `s` (stopping at the first with residual `<= ε`),
    /// keeps the best survivors of `s ∪ carried`, and offers the best new
    /// estimate to `incumbent`.
    pub fn prune(
        &self,
        s: &[IndexSet],
        carried: &NodeFamily,
        g: usize,
        z: usize,
        incumbent: &mut Incumbent,
    ) -> Result<PruneOutcome> {
        struct Scored {
            node: Node,
            estimate: Option<IndexSet>,
        }
        let mut pool: Vec<Scored> = Vec::new();
        let mut hit = false;
        let mut interrupted = false;
        let mut trigger: Option<(IndexSet, f64)> = None;
        for pi in s {
            if carried.contains(pi) || pool.iter().any(|p| &p.node.support == pi) {
                continue;
            }
            if self.out_of_time() {
                interrupted = true;
                break;
            }
            let (omega, r) = self.node_estimate(pi)?;
            if r <= self.epsilon {
                hit = true;
                trigger = Some((omega.clone(), r));
            }
            pool.push(Scored {
                node: Node { support: pi.clone(), r },
                estimate: Some(omega),
            });
            if hit {
                break;
            }
        }
        pool.extend(carried.nodes().iter().filter(|n| n.r.is_finite()).map(|n| Scored {
            node: n.clone(),
            estimate: None,
        }));

        // Stable sort keeps new nodes ahead of carried ones on ties.
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| pool[a].node.r.total_cmp(&pool[b].node.r));

        let mut survivors = NodeFamily::new();
        if g != 1 || hit {
            for &i in order.iter().take(g) {
                survivors.push(pool[i].node.clone());
            }
            if let Some(&best) = order.first() {
                let best = &pool[best];
                if let Some(omega) = &best.estimate {
                    if incumbent.r.max(self.epsilon) >= best.node.r {
                        incumbent.support = omega.clone();
                        incumbent.r = best.node.r;
                    }
                }
            }
            if hit && incumbent.r > self.epsilon {
                let (omega, r) = trigger.expect("a hit records its estimate");
                incumbent.support = omega;
                incumbent.r = r;
            }
        } else if !order.is_empty() {
            let mut j = IndexSet::empty();
            for &i in order.iter().take(z) {
                j = j.union(&pool[i].node.support);
            }
            let (omega, r) = if let Some(p) = pool.iter().find(|p| p.node.support == j && p.estimate.is_some()) {
                (p.estimate.clone().expect("checked above"), p.node.r)
            } else if j.len() >= self.k {
                self.k_estimate(&j)?
            } else {
                self.node_estimate(&j)?
            };
            survivors.push(Node { support: j, r });
            if incumbent.r.max(self.epsilon) >= r {
                incumbent.support = omega;
                incumbent.r = r;
            }
            hit = self.epsilon >= incumbent.r;
        }
        Ok(PruneOutcome {
            hit,
            survivors,
            interrupted,
        })
    }

    /// Initial `k`-support estimate and whether it already meets `ε`.
    pub fn initialize(&self) -> Result<(IndexSet, bool)> {
        let m = self.phi.nrows();
        let v = self.score(self.y)?;
        let from_scorer = IndexSet::new(top_l_ranked(&v, self.k, &IndexSet::empty())?);
        let (path, _) = omp_path(self.phi, self.y, m - 1)?;
        let from_omp = IndexSet::new(path[..self.k].to_vec());
        let r_scorer = residual_norm(self.phi, &from_scorer, self.y)?;
        let r_omp = residual_norm(self.phi, &from_omp, self.y)?;
        let psi = if r_scorer <= r_omp {
            top_l(&v, m - 1, &IndexSet::empty())?
        } else {
            IndexSet::new(path)
        };
        let (omega, r) = self.k_estimate(&psi)?;
        Ok((omega, r <= self.epsilon))
    }
}

pub fn expand<T: Scalar, S: IndexScorer<T> + ?Sized>(
    y: &DVector<T>,
    phi: &DMatrix<T>,
    gamma: &IndexSet,
    q: usize,
    scorer: &S,
) -> Result<Vec<IndexSet>> {
    check_rows(phi, y)?;
    let ctx = SearchContext {
        phi,
        y,
        k: 1,
        epsilon: 0.0,
        scorer,
        ridge: SblConfig::noiseless(),
        deadline: None,
    };
    ctx.expand(gamma, q)
}

pub fn extended_support<T: Scalar, S: IndexScorer<T> + ?Sized>(
    y: &DVector<T>,
    phi: &DMatrix<T>,
    pi: &IndexSet,
    scorer: &S,
) -> Result<IndexSet> {
    check_rows(phi, y)?;
    let ctx = SearchContext {
        phi,
        y,
        k: 1,
        epsilon: 0.0,
        scorer,
        ridge: SblConfig::noiseless(),
        deadline: None,
    };
    ctx.extended_support(pi)
}

/// Full search. `signal_min_mag` is the smallest nonzero magnitude the signal
/// model allows; indices whose final ridge coefficient exceeds half of it form
/// the support estimate.
pub fn tsn<T: Scalar, S: IndexScorer<T> + ?Sized>(
    y: &DVector<T>,
    phi: &DMatrix<T>,
    k: usize,
    params: &TsnParams,
    scorer: &S,
    ridge: SblConfig,
    signal_min_mag: f64,
) -> Result<TsnResult<T>> {
    let start = Instant::now();
    let (m, n) = phi.shape();
    params.validate(k, m, n)?;
    if !params.known_sparsity && !(signal_min_mag > 0.0 && signal_min_mag.is_finite()) {
        return Err(Error::invalid(format!(
            "signal minimum magnitude must be positive, got {signal_min_mag}"
        )));
    }
    let mut ctx = SearchContext::new(phi, y, k, params.epsilon, scorer, ridge)?;
    if params.t_max.is_finite() {
        ctx.deadline = Some(start + Duration::from_secs_f64(params.t_max));
    }

    let (init, hit) = ctx.initialize()?;
    let mut incumbent = Incumbent {
        r: residual_norm(phi, &init, y)?,
        support: init,
    };
    let mut trace = vec![incumbent.r];
    let mut nodes_expanded = 0usize;
    let mut terminated = if hit { Termination::EpsilonHit } else { Termination::TreeExhausted };

    if !hit {
        let mut parents = NodeFamily::root();
        'stages: for (&depth, &width) in params.stage_depths.iter().zip(&params.stage_widths) {
            let mut stage = NodeFamily::new();
            for parent in parents.nodes() {
                if ctx.out_of_time() {
                    terminated = Termination::BudgetExhausted;
                    break 'stages;
                }
                let mut frontier = vec![parent.support.clone()];
                for _ in 0..depth {
                    let mut next: Vec<IndexSet> = Vec::new();
                    let mut seen: HashSet<IndexSet> = HashSet::new();
                    for gamma in &frontier {
                        nodes_expanded += 1;
                        for child in ctx.expand(gamma, params.q)? {
                            if seen.insert(child.clone()) {
                                next.push(child);
                            }
                        }
                    }
                    frontier = next;
                }
                let outcome = ctx.prune(&frontier, &stage, width, params.z, &mut incumbent)?;
                trace.push(incumbent.r);
                stage = outcome.survivors;
                if outcome.hit {
                    terminated = Termination::EpsilonHit;
                    break 'stages;
                }
                if outcome.interrupted || ctx.out_of_time() {
                    terminated = Termination::BudgetExhausted;
                    break 'stages;
                }
            }
            parents = stage;
        }
    }

    let k_support = incumbent.support.clone();
    let support_estimate = if params.known_sparsity {
        k_support.clone()
    } else {
        let rho = signal_min_mag / 2.0;
        let sol = sbl_ridge(phi, &k_support, y, &ctx.ridge)?;
        IndexSet::new(
            sol.support
                .iter()
                .zip(sol.coeffs.iter())
                .filter(|(_, c)| c.modulus() > rho)
                .map(|(j, _)| j)
                .collect(),
        )
    };
    let fit = least_squares(phi, &support_estimate, y)?;
    Ok(TsnResult {
        signal_estimate: fit.embed(&support_estimate, n),
        support_estimate,
        k_support,
        residual: incumbent.r,
        terminated,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        nodes_expanded,
        residual_trace: trace,
    })
}
