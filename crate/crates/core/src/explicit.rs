//! Explicit-state checking: per-size reachability graphs, bottom strongly
//! connected components, and the ensure/compute relations decided on them.
//! Also hosts the pruning of deanonymised immediate observation executions
//! and the bottom-closure experiment.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::multiset;
use crate::protocol::{replay, Configuration, DeanonymisedExecution, Protocol, ProtocolError, StateId, Step};
use crate::sets::{BoundCondition, Condition, SetError};

/// Default limit on the number of configurations in one graph.
pub const DEFAULT_BUDGET: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExplicitError {
    #[error("node budget exceeded: needs at least {required} configurations, budget is {budget}")]
    Budget { required: u64, budget: u64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("protocol `{0}` is not an immediate observation protocol")]
    NotImmediateObservation(String),
    #[error("need more than {needed} agents going from `{from}` to `{to}`, found {found}")]
    PruneClass { from: String, to: String, found: usize, needed: usize },
    #[error("protocol must have outputs named `false` and `true`")]
    MissingBooleanOutputs,
    #[error("pruned execution failed to replay: {0}")]
    Replay(ProtocolError),
}

/// Reachability graph over configurations of a protocol, with its SCC
/// decomposition and a bottom flag per SCC.
#[derive(Clone, Debug)]
pub struct ReachGraph {
    size: u32,
    nodes: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    component: Vec<usize>,
    bottom: Vec<bool>,
}

impl ReachGraph {
    /// All configurations of size `n` with the default budget.
    pub fn full(p: &Protocol, n: u32) -> Result<Self, ExplicitError> {
        Self::full_with_budget(p, n, DEFAULT_BUDGET)
    }

    pub fn full_with_budget(p: &Protocol, n: u32, budget: usize) -> Result<Self, ExplicitError> {
        let required = multiset::composition_count(n, p.num_states());
        if required > budget as u64 {
            return Err(ExplicitError::Budget { required, budget: budget as u64 });
        }
        let nodes = Configuration::all_of_size(p.num_states(), n);
        Self::explore(p, nodes, budget, n)
    }

    /// Configurations reachable from `roots` (all of one size).
    pub fn from_roots(p: &Protocol, roots: &[Configuration], budget: usize) -> Result<Self, ExplicitError> {
        let size = roots.first().map_or(0, Configuration::size);
        for r in roots {
            p.check_configuration(r)?;
        }
        Self::explore(p, roots.to_vec(), budget, size)
    }

    fn explore(p: &Protocol, seeds: Vec<Configuration>, budget: usize, size: u32) -> Result<Self, ExplicitError> {
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        for c in seeds {
            if !index.contains_key(&c) {
                index.insert(c.clone(), nodes.len());
                nodes.push(c);
            }
        }
        if nodes.len() > budget {
            return Err(ExplicitError::Budget { required: nodes.len() as u64, budget: budget as u64 });
        }
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut k = 0;
        while k < nodes.len() {
            for succ in p.successors(&nodes[k]) {
                let id = match index.get(&succ) {
                    Some(&id) => id,
                    None => {
                        if nodes.len() >= budget {
                            return Err(ExplicitError::Budget {
                                required: nodes.len() as u64 + 1,
                                budget: budget as u64,
                            });
                        }
                        index.insert(succ.clone(), nodes.len());
                        nodes.push(succ);
                        nodes.len() - 1
                    }
                };
                targets.push(id);
            }
            offsets.push(targets.len());
            k += 1;
        }
        let (component, count) = tarjan(nodes.len(), &offsets, &targets);
        let mut bottom = vec![true; count];
        for u in 0..nodes.len() {
            for &w in &targets[offsets[u]..offsets[u + 1]] {
                if component[u] != component[w] {
                    bottom[component[u]] = false;
                }
            }
        }
        Ok(Self { size, nodes, index, offsets, targets, component, bottom })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Configuration] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Configuration {
        &self.nodes[i]
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn component(&self, i: usize) -> usize {
        self.component[i]
    }

    pub fn component_count(&self) -> usize {
        self.bottom.len()
    }

    pub fn is_bottom(&self, i: usize) -> bool {
        self.bottom[self.component[i]]
    }

    pub fn bottom_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.is_bottom(i))
    }

    /// Nodes reachable from `from` (including itself), as a membership mask.
    pub fn reachable_from(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            for &w in self.successors(u) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Nodes from which some node of `targets` is reachable.
    pub fn can_reach(&self, targets: &[bool]) -> Vec<bool> {
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for u in 0..self.nodes.len() {
            for &w in self.successors(u) {
                rev[w].push(u);
            }
        }
        let mut seen = targets.to_vec();
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| targets[i]).collect();
        while let Some(w) = queue.pop_front() {
            for &u in &rev[w] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }

    /// Nodes all of whose reachable configurations satisfy `sat`.
    pub fn ensuring_nodes(&self, sat: &[bool]) -> Vec<bool> {
        let bad: Vec<bool> = sat.iter().map(|&s| !s).collect();
        self.can_reach(&bad).into_iter().map(|b| !b).collect()
    }

    /// Bottomness straight from the definition: every configuration
    /// reachable from node `i` can reach `i` back.
    pub fn is_bottom_by_definition(&self, i: usize) -> bool {
        let forward = self.reachable_from(i);
        (0..self.nodes.len()).filter(|&j| forward[j]).all(|j| self.reachable_from(j)[i])
    }
}

/// Iterative Tarjan. Returns the component of every node and the number of
/// components.
fn tarjan(n: usize, offsets: &[usize], targets: &[usize]) -> (Vec<usize>, usize) {
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component = vec![UNSEEN; n];
    let mut count = 0;
    let mut counter = 0;
    let mut calls: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        calls.push((root, offsets[root]));
        while let Some(&mut (v, ref mut pos)) = calls.last_mut() {
            if *pos < offsets[v + 1] {
                let w = targets[*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    calls.push((w, offsets[w]));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                calls.pop();
                if let Some(&(u, _)) = calls.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        component[w] = count;
                        if w == v {
                            break;
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    (component, count)
}

/// Full reachability graph of size `n`.
pub fn reach_graph(p: &Protocol, n: u32) -> Result<ReachGraph, ExplicitError> {
    ReachGraph::full(p, n)
}

/// All configurations of size `n` lying in bottom SCCs.
pub fn bottom_configs(p: &Protocol, n: u32) -> Result<BTreeSet<Configuration>, ExplicitError> {
    let g = ReachGraph::full(p, n)?;
    Ok(g.bottom_nodes().map(|i| g.node(i).clone()).collect())
}

/// Whether every configuration reachable from `c` (including `c`) satisfies `s`.
pub fn config_ensures(p: &Protocol, c: &Configuration, s: &Condition) -> Result<bool, ExplicitError> {
    let bound = s.bind(p)?;
    let g = ReachGraph::from_roots(p, std::slice::from_ref(c), DEFAULT_BUDGET)?;
    Ok(g.nodes().iter().all(|x| bound.holds(x)))
}

/// Outcome of [`check_ensures`] for one size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnsureVerdict {
    pub size: u32,
    pub holds: bool,
    /// An input configuration with a reachable violating bottom configuration.
    pub witness: Option<Configuration>,
    pub violator: Option<Configuration>,
}

/// Decides whether `p` ensures `s` from every input configuration of size
/// `n`: every bottom SCC reachable from an input lies inside `s`.
pub fn check_ensures(p: &Protocol, s: &Condition, n: u32) -> Result<EnsureVerdict, ExplicitError> {
    check_ensures_with_budget(p, s, n, DEFAULT_BUDGET)
}

pub fn check_ensures_with_budget(
    p: &Protocol,
    s: &Condition,
    n: u32,
    budget: usize,
) -> Result<EnsureVerdict, ExplicitError> {
    let bound = s.bind(p)?;
    check_ensures_from(p, &bound, &p.input_configurations(n), budget).map(|mut v| {
        v.size = n;
        v
    })
}

/// [`check_ensures`] over an explicit list of roots.
pub fn check_ensures_from(
    p: &Protocol,
    s: &BoundCondition,
    roots: &[Configuration],
    budget: usize,
) -> Result<EnsureVerdict, ExplicitError> {
    let size = roots.first().map_or(0, Configuration::size);
    let g = ReachGraph::from_roots(p, roots, budget)?;
    let violating: Vec<bool> = (0..g.node_count()).map(|i| g.is_bottom(i) && !s.holds(g.node(i))).collect();
    if !violating.iter().any(|&v| v) {
        return Ok(EnsureVerdict { size, holds: true, witness: None, violator: None });
    }
    let reaches = g.can_reach(&violating);
    let root = roots
        .iter()
        .find(|r| reaches[g.index_of(r).expect("root in graph")])
        .expect("every node is reachable from a root");
    let forward = g.reachable_from(g.index_of(root).expect("root in graph"));
    let violator = (0..g.node_count()).find(|&i| forward[i] && violating[i]).expect("reachable violator");
    Ok(EnsureVerdict { size, holds: false, witness: Some(root.clone()), violator: Some(g.node(violator).clone()) })
}

/// Outcome of [`check_computes`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputeVerdict {
    pub holds: bool,
    pub inputs_checked: usize,
    /// An input and a reachable bottom configuration that is not a
    /// consensus on the expected value.
    pub witness: Option<(Configuration, Configuration)>,
}

/// Decides whether `p` computes the predicate `phi` on all inputs of size
/// `1..=max_n`: every bottom configuration reachable from `C` has all
/// agents outputting `phi(C)`.
pub fn check_computes(
    p: &Protocol,
    phi: impl Fn(&Configuration) -> bool,
    max_n: u32,
) -> Result<ComputeVerdict, ExplicitError> {
    check_computes_with_budget(p, phi, 1..=max_n, DEFAULT_BUDGET)
}

pub fn check_computes_with_budget(
    p: &Protocol,
    phi: impl Fn(&Configuration) -> bool,
    sizes: impl IntoIterator<Item = u32>,
    budget: usize,
) -> Result<ComputeVerdict, ExplicitError> {
    let f = p.output_index("false").ok_or(ExplicitError::MissingBooleanOutputs)?;
    let t = p.output_index("true").ok_or(ExplicitError::MissingBooleanOutputs)?;
    let mut inputs_checked = 0;
    for n in sizes {
        let roots = p.input_configurations(n);
        let g = ReachGraph::from_roots(p, &roots, budget)?;
        for root in &roots {
            inputs_checked += 1;
            let want = if phi(root) { t } else { f };
            let forward = g.reachable_from(g.index_of(root).expect("root in graph"));
            let bad = (0..g.node_count()).find(|&i| {
                forward[i] && g.is_bottom(i) && g.node(i).support().iter().any(|&q| p.output_of(q) != want)
            });
            if let Some(i) = bad {
                return Ok(ComputeVerdict {
                    holds: false,
                    inputs_checked,
                    witness: Some((root.clone(), g.node(i).clone())),
                });
            }
        }
    }
    Ok(ComputeVerdict { holds: true, inputs_checked, witness: None })
}

/// Removes one agent travelling from `q` to `q2` from an immediate
/// observation execution in which more than `|Q|` agents do so.
///
/// The remaining `k − 1` agents of that class are rebuilt as guardians:
/// for every state `r` visited by the class, one guardian follows the first
/// class agent to enter `r`, waits in `r` until the last class agent leaves
/// it, then follows that agent to `q2`. Observations of a class agent in
/// state `r` are redirected to `r`'s guardian, which is in `r` at that time.
pub fn prune_execution(
    p: &Protocol,
    e: &DeanonymisedExecution,
    q: StateId,
    q2: StateId,
) -> Result<DeanonymisedExecution, ExplicitError> {
    if !p.is_io() {
        return Err(ExplicitError::NotImmediateObservation(p.name().to_string()));
    }
    for s in [q, q2] {
        if s.0 >= p.num_states() {
            return Err(ProtocolError::InvalidState(s.0).into());
        }
    }
    let traj = e.trajectories(p)?;
    let m = e.steps().len();
    let class: Vec<usize> = (0..traj.len()).filter(|&a| traj[a][0] == q && traj[a][m] == q2).collect();
    if class.len() <= p.num_states() {
        return Err(ExplicitError::PruneClass {
            from: p.state_name(q).to_string(),
            to: p.state_name(q2).to_string(),
            found: class.len(),
            needed: p.num_states(),
        });
    }
    let in_class: Vec<bool> = (0..traj.len()).map(|a| class.contains(&a)).collect();

    // per visited state: (first time, first agent, last time, last agent)
    let mut span: Vec<Option<(usize, usize, usize, usize)>> = vec![None; p.num_states()];
    for t in 0..=m {
        for &a in &class {
            let r = traj[a][t].0;
            match &mut span[r] {
                slot @ None => *slot = Some((t, a, t, a)),
                Some(s) => {
                    s.2 = t;
                    s.3 = a;
                }
            }
        }
    }
    let visited: Vec<usize> = (0..p.num_states()).filter(|&r| span[r].is_some()).collect();

    // new agent ids: non-class agents in original order, then guardians
    let mut new_id = vec![usize::MAX; traj.len()];
    let mut agents = Vec::new();
    for a in 0..traj.len() {
        if !in_class[a] {
            new_id[a] = agents.len();
            agents.push(traj[a][0]);
        }
    }
    let mut guardian_of = vec![usize::MAX; p.num_states()];
    // (guardian id, state it guards)
    let mut guardians: Vec<(usize, usize)> = Vec::new();
    for &r in &visited {
        guardian_of[r] = agents.len();
        guardians.push((agents.len(), r));
        agents.push(q);
    }
    let q2_guard = q2.0;
    while guardians.len() < class.len() - 1 {
        guardians.push((agents.len(), q2_guard));
        agents.push(q);
    }

    let redirect = |partner: usize, t: usize| -> usize {
        if in_class[partner] {
            guardian_of[traj[partner][t].0]
        } else {
            new_id[partner]
        }
    };
    let mut steps = Vec::new();
    for (t, step) in e.steps().iter().enumerate() {
        if !in_class[step.actor] {
            steps.push(Step { transition: step.transition, actor: new_id[step.actor], partner: redirect(step.partner, t) });
            continue;
        }
        for &(g, r) in &guardians {
            let (first, a_first, last, a_last) = span[r].expect("visited state");
            let follows = (t < first && step.actor == a_first) || (t >= last && step.actor == a_last);
            if follows {
                steps.push(Step { transition: step.transition, actor: g, partner: redirect(step.partner, t) });
            }
        }
    }
    let pruned = DeanonymisedExecution::new(agents, steps);
    replay(p, &pruned).map_err(ExplicitError::Replay)?;
    Ok(pruned)
}

/// Number of agents per `(start, end)` state pair.
pub fn trajectory_counts(
    p: &Protocol,
    e: &DeanonymisedExecution,
) -> Result<HashMap<(StateId, StateId), usize>, ProtocolError> {
    let mut counts = HashMap::new();
    for pair in e.endpoints(p)? {
        *counts.entry(pair).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Parameters of [`bottom_closure_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClosureOptions {
    /// Only states holding at least this many agents receive extra agents.
    pub threshold: u32,
    pub max_extra: u32,
    /// Largest configuration size explored.
    pub max_size: u32,
}

impl ClosureOptions {
    /// Threshold `|Q|⁴` and sizes up to `2·threshold + max_extra`.
    pub fn for_protocol(p: &Protocol, max_extra: u32) -> Self {
        let threshold = (p.num_states() as u32).pow(4);
        Self { threshold, max_extra, max_size: 2 * threshold + max_extra }
    }
}

/// Result of [`bottom_closure_check`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClosureReport {
    /// Additions whose support only uses states at or above the threshold.
    pub checks: usize,
    pub violations: Vec<(Configuration, Configuration)>,
    /// All additions tried, regardless of threshold.
    pub total_checks: usize,
    /// Least threshold at which every tried addition preserved bottomness.
    pub minimal_threshold: u32,
}

/// For every bottom configuration `B` up to the size limit and every
/// nonempty `extra` of at most `max_extra` agents, checks whether `B + extra`
/// is bottom. The threshold decides which checks count; every addition
/// contributes to the minimal threshold at which closure held.
pub fn bottom_closure_check(p: &Protocol, opts: ClosureOptions) -> Result<ClosureReport, ExplicitError> {
    if !p.is_io() {
        return Err(ExplicitError::NotImmediateObservation(p.name().to_string()));
    }
    let graphs: Vec<ReachGraph> = (0..=opts.max_size).map(|n| ReachGraph::full(p, n)).collect::<Result<_, _>>()?;
    let k = p.num_states();
    let mut report = ClosureReport::default();
    let mut worst: Option<u32> = None;
    for n in 0..=opts.max_size {
        let g = &graphs[n as usize];
        for b in g.bottom_nodes() {
            let base = g.node(b);
            for e in 1..=opts.max_extra.min(opts.max_size - n) {
                let target = &graphs[(n + e) as usize];
                for extra in multiset::compositions(e, k) {
                    let strength = (0..k).filter(|&q| extra[q] > 0).map(|q| base.counts()[q]).min().unwrap_or(0);
                    let mut c = base.clone();
                    for (q, &x) in extra.iter().enumerate() {
                        c.add(StateId(q), x);
                    }
                    let ok = target.is_bottom(target.index_of(&c).expect("full graph"));
                    report.total_checks += 1;
                    if !ok {
                        worst = Some(worst.map_or(strength, |w| w.max(strength)));
                    }
                    if strength >= opts.threshold {
                        report.checks += 1;
                        if !ok {
                            report.violations.push((base.clone(), c));
                        }
                    }
                }
            }
        }
    }
    report.minimal_threshold = worst.map_or(0, |w| w + 1);
    Ok(report)
}
