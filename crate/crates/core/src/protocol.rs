//! Population protocol object model.
//!
//! A [`Protocol`] is a finite set of named states with a step relation over
//! ordered pairs of states, a nonempty set of input states and an output map
//! into an ordered output alphabet. Configurations are dense count vectors
//! indexed by [`StateId`]. Executions can be anonymous (a sequence of
//! configurations) or deanonymised, where every agent carries an identity.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::multiset;

/// Index of a state in the owning protocol's state table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A transition `(actor, partner) ↦ (actor_next, partner_next)`.
///
/// For immediate observation protocols `partner == partner_next`: the actor
/// changes its state by observing the partner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub actor: StateId,
    pub partner: StateId,
    pub actor_next: StateId,
    pub partner_next: StateId,
}

impl Transition {
    pub fn new(actor: StateId, partner: StateId, actor_next: StateId, partner_next: StateId) -> Self {
        Self { actor, partner, actor_next, partner_next }
    }

    /// `actor --observed--> next`
    pub fn observation(actor: StateId, observed: StateId, next: StateId) -> Self {
        Self::new(actor, observed, next, observed)
    }

    pub fn is_observation(&self) -> bool {
        self.partner == self.partner_next
    }

    pub fn is_identity(&self) -> bool {
        self.actor == self.actor_next && self.partner == self.partner_next
    }

    fn states(&self) -> [StateId; 4] {
        [self.actor, self.partner, self.actor_next, self.partner_next]
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("protocol has no states")]
    NoStates,
    #[error("state index {0} out of range")]
    InvalidState(usize),
    #[error("protocol needs at least one input state")]
    NoInputs,
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("duplicate output value `{0}`")]
    DuplicateOutput(String),
    #[error("output map has {got} entries for {expected} states")]
    OutputMapArity { expected: usize, got: usize },
    #[error("output index {0} out of range")]
    InvalidOutput(usize),
    #[error("transition index {0} out of range")]
    UnknownTransition(usize),
    #[error("transition {transition} not enabled: needs {needed} agent(s) in `{state}`, found {found}")]
    NotEnabled { transition: usize, state: String, needed: u32, found: u32 },
    #[error("configuration has {got} coordinates, protocol has {expected} states")]
    ConfigurationArity { expected: usize, got: usize },
    #[error("output mux expects {expected} components, got {got}")]
    MuxArity { expected: usize, got: usize },
    #[error("product needs at least one component")]
    EmptyProduct,
    #[error("product component {0} must have exactly one input state")]
    ComponentInputs(usize),
    #[error("product would have {0} states, above the limit of {1}")]
    ProductTooLarge(usize, usize),
    #[error("invalid step at index {index}: {reason}")]
    InvalidStep { index: usize, reason: String },
}

/// A population protocol `(Q, Step, I, O, o)`.
#[derive(Clone, Debug)]
pub struct Protocol {
    name: String,
    states: Vec<String>,
    transitions: Vec<Transition>,
    inputs: Vec<StateId>,
    outputs: Vec<String>,
    output_map: Vec<usize>,
    by_pair: HashMap<(StateId, StateId), Vec<usize>>,
    is_io: bool,
}

impl PartialEq for Protocol {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.states == other.states
            && self.transitions == other.transitions
            && self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.output_map == other.output_map
    }
}

impl Eq for Protocol {}

impl Protocol {
    /// Builds a protocol, validating every index. Duplicate transitions and
    /// duplicate input states are dropped, keeping the first occurrence.
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        transitions: Vec<Transition>,
        inputs: Vec<StateId>,
        outputs: Vec<String>,
        output_map: Vec<usize>,
    ) -> Result<Self, ProtocolError> {
        if states.is_empty() {
            return Err(ProtocolError::NoStates);
        }
        let mut seen = HashSet::new();
        for s in &states {
            if !seen.insert(s.as_str()) {
                return Err(ProtocolError::DuplicateState(s.clone()));
            }
        }
        let mut seen = HashSet::new();
        for o in &outputs {
            if !seen.insert(o.as_str()) {
                return Err(ProtocolError::DuplicateOutput(o.clone()));
            }
        }
        let n = states.len();
        let check = |q: StateId| if q.0 < n { Ok(()) } else { Err(ProtocolError::InvalidState(q.0)) };
        for t in &transitions {
            for q in t.states() {
                check(q)?;
            }
        }
        let mut input_set = BTreeSet::new();
        let mut dedup_inputs = Vec::new();
        for &q in &inputs {
            check(q)?;
            if input_set.insert(q) {
                dedup_inputs.push(q);
            }
        }
        if dedup_inputs.is_empty() {
            return Err(ProtocolError::NoInputs);
        }
        if output_map.len() != n {
            return Err(ProtocolError::OutputMapArity { expected: n, got: output_map.len() });
        }
        if let Some(&bad) = output_map.iter().find(|&&o| o >= outputs.len()) {
            return Err(ProtocolError::InvalidOutput(bad));
        }

        let mut seen = HashSet::new();
        let transitions: Vec<Transition> = transitions.into_iter().filter(|t| seen.insert(*t)).collect();
        let mut by_pair: HashMap<(StateId, StateId), Vec<usize>> = HashMap::new();
        for (i, t) in transitions.iter().enumerate() {
            by_pair.entry((t.actor, t.partner)).or_default().push(i);
        }
        let is_io = transitions.iter().all(Transition::is_observation);
        Ok(Self {
            name: name.into(),
            states,
            transitions,
            inputs: dedup_inputs,
            outputs,
            output_map,
            by_pair,
            is_io,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.states[q.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Indices of the transitions whose source pair is `(actor, partner)`.
    pub fn transitions_on(&self, actor: StateId, partner: StateId) -> &[usize] {
        self.by_pair.get(&(actor, partner)).map_or(&[], Vec::as_slice)
    }

    pub fn inputs(&self) -> &[StateId] {
        &self.inputs
    }

    pub fn is_input(&self, q: StateId) -> bool {
        self.inputs.contains(&q)
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o == name)
    }

    pub fn output_of(&self, q: StateId) -> usize {
        self.output_map[q.0]
    }

    pub fn output_map(&self) -> &[usize] {
        &self.output_map
    }

    /// True iff every transition leaves the partner unchanged.
    pub fn is_io(&self) -> bool {
        self.is_io
    }

    /// Same protocol under a different output alphabet and output map.
    pub fn with_outputs(&self, outputs: Vec<String>, output_map: Vec<usize>) -> Result<Self, ProtocolError> {
        Self::new(
            self.name.clone(),
            self.states.clone(),
            self.transitions.clone(),
            self.inputs.clone(),
            outputs,
            output_map,
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn check_configuration(&self, c: &Configuration) -> Result<(), ProtocolError> {
        if c.len() != self.num_states() {
            return Err(ProtocolError::ConfigurationArity { expected: self.num_states(), got: c.len() });
        }
        Ok(())
    }

    /// The deficient state, with required and present counts, if `t` is not
    /// enabled in `c`. Two distinct agents are required even when both
    /// source states coincide.
    fn deficiency(&self, c: &Configuration, t: &Transition) -> Option<(StateId, u32, u32)> {
        if t.actor == t.partner {
            let have = c.get(t.actor);
            (have < 2).then_some((t.actor, 2, have))
        } else if c.get(t.actor) < 1 {
            Some((t.actor, 1, 0))
        } else if c.get(t.partner) < 1 {
            Some((t.partner, 1, 0))
        } else {
            None
        }
    }

    pub fn is_enabled(&self, c: &Configuration, t: usize) -> bool {
        self.transitions.get(t).is_some_and(|tr| self.deficiency(c, tr).is_none())
    }

    /// `c − ⟦q1,q2⟧ + ⟦q1',q2'⟧`.
    pub fn apply_transition(&self, c: &Configuration, t: usize) -> Result<Configuration, ProtocolError> {
        self.check_configuration(c)?;
        let tr = self.transitions.get(t).ok_or(ProtocolError::UnknownTransition(t))?;
        if let Some((q, needed, found)) = self.deficiency(c, tr) {
            return Err(ProtocolError::NotEnabled {
                transition: t,
                state: self.states[q.0].clone(),
                needed,
                found,
            });
        }
        Ok(fire(c, tr))
    }

    /// Indices of all transitions enabled in `c`.
    pub fn enabled_transitions(&self, c: &Configuration) -> Vec<usize> {
        let support = c.support();
        let mut out = Vec::new();
        for &a in &support {
            for &b in &support {
                if a == b && c.get(a) < 2 {
                    continue;
                }
                out.extend_from_slice(self.transitions_on(a, b));
            }
        }
        out.sort_unstable();
        out
    }

    /// All configurations reachable from `c` in exactly one step.
    pub fn successors(&self, c: &Configuration) -> BTreeSet<Configuration> {
        self.enabled_transitions(c)
            .into_iter()
            .map(|t| fire(c, &self.transitions[t]))
            .collect()
    }

    /// The multiset of outputs of `c`, indexed by output value.
    pub fn output_multiset(&self, c: &Configuration) -> Vec<u32> {
        let mut out = vec![0u32; self.outputs.len()];
        for (q, &k) in c.counts().iter().enumerate() {
            out[self.output_map[q]] += k;
        }
        out
    }

    /// Input configurations of the given size (support within the inputs).
    pub fn input_configurations(&self, size: u32) -> Vec<Configuration> {
        multiset::compositions(size, self.inputs.len())
            .into_iter()
            .map(|parts| {
                let mut counts = vec![0u32; self.num_states()];
                for (k, &q) in self.inputs.iter().enumerate() {
                    counts[q.0] = parts[k];
                }
                Configuration::new(counts)
            })
            .collect()
    }

    pub fn is_input_configuration(&self, c: &Configuration) -> bool {
        c.support().iter().all(|&q| self.is_input(q))
    }

    /// Renders a transition as `a b -> c d`.
    pub fn render_transition(&self, t: &Transition) -> String {
        format!(
            "{} {} -> {} {}",
            self.state_name(t.actor),
            self.state_name(t.partner),
            self.state_name(t.actor_next),
            self.state_name(t.partner_next)
        )
    }
}

fn fire(c: &Configuration, t: &Transition) -> Configuration {
    let mut counts = c.0.clone();
    counts[t.actor.0] -= 1;
    counts[t.partner.0] -= 1;
    counts[t.actor_next.0] += 1;
    counts[t.partner_next.0] += 1;
    Configuration(counts)
}

/// A configuration `C: Q → ℕ` as a dense count vector.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(Vec<u32>);

impl Configuration {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn zero(num_states: usize) -> Self {
        Self(vec![0; num_states])
    }

    /// `k` agents in state `q`, nothing elsewhere.
    pub fn singleton(num_states: usize, q: StateId, k: u32) -> Self {
        let mut c = Self::zero(num_states);
        c.0[q.0] = k;
        c
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn into_counts(self) -> Vec<u32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, q: StateId) -> u32 {
        self.0[q.0]
    }

    pub fn set(&mut self, q: StateId, k: u32) {
        self.0[q.0] = k;
    }

    pub fn add(&mut self, q: StateId, k: u32) {
        self.0[q.0] += k;
    }

    /// Removes `k` agents from `q`; `None` when fewer are present.
    pub fn remove(&mut self, q: StateId, k: u32) -> Option<()> {
        let slot = &mut self.0[q.0];
        *slot = slot.checked_sub(k)?;
        Some(())
    }

    /// Number of agents.
    pub fn size(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Inhabited states.
    pub fn support(&self) -> Vec<StateId> {
        self.0.iter().enumerate().filter(|(_, &k)| k > 0).map(|(q, _)| StateId(q)).collect()
    }

    /// Coordinatewise `self ≥ other`.
    pub fn dominates(&self, other: &Configuration) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    /// All configurations of `num_states` coordinates with `size` agents.
    pub fn all_of_size(num_states: usize, size: u32) -> Vec<Configuration> {
        multiset::compositions(size, num_states).into_iter().map(Configuration).collect()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for Configuration {
    fn from(counts: Vec<u32>) -> Self {
        Self(counts)
    }
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

/// Output selection for a product: maps the tuple of component output
/// indices to an index into `outputs`.
pub struct OutputMux<'a> {
    outputs: Vec<String>,
    arity: usize,
    select: Box<dyn Fn(&[usize]) -> usize + 'a>,
}

impl<'a> OutputMux<'a> {
    pub fn new(outputs: Vec<String>, arity: usize, select: impl Fn(&[usize]) -> usize + 'a) -> Self {
        Self { outputs, arity, select: Box::new(select) }
    }

    /// Single-component mux returning the component's own output.
    pub fn identity(p: &Protocol) -> OutputMux<'static> {
        OutputMux::new(p.outputs().to_vec(), 1, |o| o[0])
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn arity(&self) -> usize {
        self.arity
    }
}

/// Largest product (in states) built by [`product`].
pub const MAX_PRODUCT_STATES: usize = 4096;

fn check_components(components: &[Protocol], mux: &OutputMux<'_>) -> Result<(), ProtocolError> {
    if components.is_empty() {
        return Err(ProtocolError::EmptyProduct);
    }
    if mux.arity != components.len() {
        return Err(ProtocolError::MuxArity { expected: mux.arity, got: components.len() });
    }
    for (i, c) in components.iter().enumerate() {
        if c.inputs().len() != 1 {
            return Err(ProtocolError::ComponentInputs(i));
        }
    }
    Ok(())
}

fn tuple_name(components: &[Protocol], tuple: &[StateId]) -> String {
    let parts: Vec<&str> = components.iter().zip(tuple).map(|(p, &q)| p.state_name(q)).collect();
    format!("({})", parts.join(","))
}

/// Distinct non-identity images of component `p` on the ordered pair `(a, b)`.
fn component_moves(p: &Protocol, a: StateId, b: StateId) -> Vec<(StateId, StateId)> {
    let mut moves: Vec<(StateId, StateId)> = Vec::new();
    for &t in p.transitions_on(a, b) {
        let tr = &p.transitions()[t];
        let img = (tr.actor_next, tr.partner_next);
        if img != (a, b) && !moves.contains(&img) {
            moves.push(img);
        }
    }
    moves
}

/// Cartesian product of per-component choices.
fn combine(choices: &[Vec<(StateId, StateId)>]) -> Vec<(Vec<StateId>, Vec<StateId>)> {
    let mut acc: Vec<(Vec<StateId>, Vec<StateId>)> = vec![(Vec::new(), Vec::new())];
    for opts in choices {
        let mut next = Vec::with_capacity(acc.len() * opts.len());
        for (xs, ys) in &acc {
            for &(x, y) in opts {
                let mut xs = xs.clone();
                let mut ys = ys.clone();
                xs.push(x);
                ys.push(y);
                next.push((xs, ys));
            }
        }
        acc = next;
    }
    acc
}

/// Synchronous product with identity padding.
///
/// States are all tuples of component states (first component most
/// significant). For every ordered pair of tuple states, each component
/// either fires one of its transitions on its coordinate pair or stays
/// put; the choice where every component stays put is excluded.
pub fn product(components: &[Protocol], mux: &OutputMux<'_>) -> Result<Protocol, ProtocolError> {
    check_components(components, mux)?;
    let total = components
        .iter()
        .try_fold(1usize, |acc, p| acc.checked_mul(p.num_states()).filter(|&n| n <= MAX_PRODUCT_STATES));
    let Some(total) = total else {
        let approx = components.iter().fold(1usize, |acc, p| acc.saturating_mul(p.num_states()));
        return Err(ProtocolError::ProductTooLarge(approx, MAX_PRODUCT_STATES));
    };

    let tuples: Vec<Vec<StateId>> = (0..total)
        .map(|mut code| {
            let mut t = vec![StateId(0); components.len()];
            for (i, p) in components.iter().enumerate().rev() {
                t[i] = StateId(code % p.num_states());
                code /= p.num_states();
            }
            t
        })
        .collect();
    let encode = |t: &[StateId]| -> usize {
        components.iter().zip(t).fold(0usize, |acc, (p, q)| acc * p.num_states() + q.0)
    };

    let mut transitions = Vec::new();
    for s in &tuples {
        for u in &tuples {
            let choices: Vec<Vec<(StateId, StateId)>> = components
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut opts = vec![(s[i], u[i])];
                    opts.extend(component_moves(p, s[i], u[i]));
                    opts
                })
                .collect();
            for (xs, ys) in combine(&choices) {
                if xs == *s && ys == *u {
                    continue;
                }
                transitions.push(Transition::new(
                    StateId(encode(s)),
                    StateId(encode(u)),
                    StateId(encode(&xs)),
                    StateId(encode(&ys)),
                ));
            }
        }
    }
    assemble(components, mux, tuples, transitions)
}

/// Lockstep product restricted to the tuple states coverable from the input
/// tuple: on an ordered pair, every component with an applicable
/// non-identity transition fires one of them, and only components without
/// one stay put.
pub fn lockstep_product(components: &[Protocol], mux: &OutputMux<'_>) -> Result<Protocol, ProtocolError> {
    check_components(components, mux)?;
    let start: Vec<StateId> = components.iter().map(|p| p.inputs()[0]).collect();
    let mut tuples = vec![start.clone()];
    let mut index: HashMap<Vec<StateId>, usize> = HashMap::from([(start, 0)]);
    let mut transitions = Vec::new();
    let limit = 1 << 16;

    let mut k = 0;
    while k < tuples.len() {
        for j in 0..=k {
            let pairs: &[(usize, usize)] = if j == k { &[(k, k)] } else { &[(k, j), (j, k)] };
            for &(a, b) in pairs {
                let s = tuples[a].clone();
                let u = tuples[b].clone();
                let choices: Vec<Vec<(StateId, StateId)>> = components
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let moves = component_moves(p, s[i], u[i]);
                        if moves.is_empty() {
                            vec![(s[i], u[i])]
                        } else {
                            moves
                        }
                    })
                    .collect();
                for (xs, ys) in combine(&choices) {
                    if xs == s && ys == u {
                        continue;
                    }
                    let mut id_of = |t: Vec<StateId>| -> Result<usize, ProtocolError> {
                        if let Some(&i) = index.get(&t) {
                            return Ok(i);
                        }
                        if tuples.len() >= limit {
                            return Err(ProtocolError::ProductTooLarge(tuples.len() + 1, limit));
                        }
                        tuples.push(t.clone());
                        index.insert(t, tuples.len() - 1);
                        Ok(tuples.len() - 1)
                    };
                    let x = id_of(xs)?;
                    let y = id_of(ys)?;
                    transitions.push(Transition::new(StateId(a), StateId(b), StateId(x), StateId(y)));
                }
            }
        }
        k += 1;
    }
    assemble(components, mux, tuples, transitions)
}

fn assemble(
    components: &[Protocol],
    mux: &OutputMux<'_>,
    tuples: Vec<Vec<StateId>>,
    transitions: Vec<Transition>,
) -> Result<Protocol, ProtocolError> {
    let start: Vec<StateId> = components.iter().map(|p| p.inputs()[0]).collect();
    let input = tuples.iter().position(|t| *t == start).expect("input tuple present");
    let states: Vec<String> = tuples.iter().map(|t| tuple_name(components, t)).collect();
    let output_map = tuples
        .iter()
        .map(|t| {
            let outs: Vec<usize> = components.iter().zip(t).map(|(p, &q)| p.output_of(q)).collect();
            (mux.select)(&outs)
        })
        .collect();
    let name = components.iter().map(Protocol::name).collect::<Vec<_>>().join("*");
    Protocol::new(name, states, transitions, vec![StateId(input)], mux.outputs.clone(), output_map)
}

// ---------------------------------------------------------------------------
// Deanonymised executions
// ---------------------------------------------------------------------------

/// One step of a deanonymised execution: agent `actor` takes the actor role
/// of `transition` with agent `partner` as partner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub transition: usize,
    pub actor: usize,
    pub partner: usize,
}

/// An execution in which every agent has an identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeanonymisedExecution {
    agents: Vec<StateId>,
    steps: Vec<Step>,
}

impl DeanonymisedExecution {
    /// `agents[i]` is the initial state of agent `i`.
    pub fn new(agents: Vec<StateId>, steps: Vec<Step>) -> Self {
        Self { agents, steps }
    }

    /// Assigns agent identities canonically: agents `0..c(q0)` start in the
    /// first state, the next block in the second, and so on.
    pub fn from_configuration(c: &Configuration, steps: Vec<Step>) -> Self {
        let agents = multiset::enumerate(c.counts()).into_iter().map(StateId).collect();
        Self { agents, steps }
    }

    pub fn initial_agents(&self) -> &[StateId] {
        &self.agents
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn initial_configuration(&self, num_states: usize) -> Configuration {
        let mut c = Configuration::zero(num_states);
        for &q in &self.agents {
            c.add(q, 1);
        }
        c
    }

    /// Per-agent state at every time `0..=steps.len()`, indexed `[agent][time]`.
    pub fn trajectories(&self, p: &Protocol) -> Result<Vec<Vec<StateId>>, ProtocolError> {
        let mut current = self.agents.clone();
        let mut out: Vec<Vec<StateId>> = current.iter().map(|&q| vec![q]).collect();
        for (index, step) in self.steps.iter().enumerate() {
            apply_step(p, &mut current, step, index)?;
            for (agent, &q) in current.iter().enumerate() {
                out[agent].push(q);
            }
        }
        Ok(out)
    }

    /// Final state of every agent.
    pub fn final_agents(&self, p: &Protocol) -> Result<Vec<StateId>, ProtocolError> {
        let mut current = self.agents.clone();
        for (index, step) in self.steps.iter().enumerate() {
            apply_step(p, &mut current, step, index)?;
        }
        Ok(current)
    }

    /// `(start, end)` state of every agent.
    pub fn endpoints(&self, p: &Protocol) -> Result<Vec<(StateId, StateId)>, ProtocolError> {
        let last = self.final_agents(p)?;
        Ok(self.agents.iter().copied().zip(last).collect())
    }
}

fn apply_step(p: &Protocol, agents: &mut [StateId], step: &Step, index: usize) -> Result<(), ProtocolError> {
    let invalid = |reason: String| ProtocolError::InvalidStep { index, reason };
    let tr = p
        .transitions()
        .get(step.transition)
        .ok_or_else(|| invalid(format!("unknown transition {}", step.transition)))?;
    if step.actor == step.partner {
        return Err(invalid(format!("agent {} cannot interact with itself", step.actor)));
    }
    for agent in [step.actor, step.partner] {
        if agent >= agents.len() {
            return Err(invalid(format!("agent {agent} does not exist")));
        }
    }
    if agents[step.actor] != tr.actor {
        return Err(invalid(format!(
            "actor {} is in `{}`, transition needs `{}`",
            step.actor,
            p.state_name(agents[step.actor]),
            p.state_name(tr.actor)
        )));
    }
    if agents[step.partner] != tr.partner {
        return Err(invalid(format!(
            "partner {} is in `{}`, transition needs `{}`",
            step.partner,
            p.state_name(agents[step.partner]),
            p.state_name(tr.partner)
        )));
    }
    agents[step.actor] = tr.actor_next;
    agents[step.partner] = tr.partner_next;
    Ok(())
}

/// The configuration sequence induced by a deanonymised execution.
pub fn replay(p: &Protocol, e: &DeanonymisedExecution) -> Result<Vec<Configuration>, ProtocolError> {
    if let Some(bad) = e.agents.iter().find(|q| q.0 >= p.num_states()) {
        return Err(ProtocolError::InvalidState(bad.0));
    }
    let mut agents = e.agents.clone();
    let mut config = e.initial_configuration(p.num_states());
    let mut out = vec![config.clone()];
    for (index, step) in e.steps.iter().enumerate() {
        apply_step(p, &mut agents, step, index)?;
        config = fire(&config, &p.transitions()[step.transition]);
        out.push(config.clone());
    }
    Ok(out)
}

/// Convenience constructor used by tests and fixtures: states, inputs and
/// outputs by name, transitions as name quadruples.
pub fn protocol_from_names(
    name: &str,
    states: &[&str],
    transitions: &[(&str, &str, &str, &str)],
    inputs: &[&str],
    outputs: &[&str],
    output_map: &[(&str, &str)],
) -> Result<Protocol, ProtocolError> {
    let st: Vec<String> = states.iter().map(|s| s.to_string()).collect();
    let id = |s: &str| StateId(st.iter().position(|x| x == s).unwrap_or(usize::MAX));
    let outs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
    let mut map = vec![usize::MAX; st.len()];
    for (s, o) in output_map {
        let q = id(s);
        if q.0 < map.len() {
            map[q.0] = outs.iter().position(|x| x == o).unwrap_or(usize::MAX);
        }
    }
    Protocol::new(
        name,
        st.clone(),
        transitions.iter().map(|&(a, b, c, d)| Transition::new(id(a), id(b), id(c), id(d))).collect(),
        inputs.iter().map(|s| id(s)).collect(),
        outs,
        map,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn c(v: &[u32]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn general_example_first_step() {
        let p1 = fixtures::p1();
        assert!(!p1.is_io());
        let t = p1.transitions().iter().position(|t| p1.render_transition(t) == "q1 q1 -> q0 q2").unwrap();
        assert_eq!(p1.apply_transition(&c(&[0, 3, 0, 0]), t).unwrap(), c(&[1, 1, 1, 0]));
    }

    #[test]
    fn observation_needs_two_agents() {
        let p2 = fixtures::p2();
        let t = p2.transitions().iter().position(|t| p2.render_transition(t) == "q2 q2 -> q3 q2").unwrap();
        let err = p2.apply_transition(&c(&[0, 2, 1, 0]), t).unwrap_err();
        match err {
            ProtocolError::NotEnabled { state, needed, found, .. } => {
                assert_eq!(state, "q2");
                assert_eq!((needed, found), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p2.apply_transition(&c(&[0, 1, 2, 0]), t).unwrap(), c(&[0, 1, 1, 1]));
    }

    #[test]
    fn successors_examples() {
        let p1 = fixtures::p1();
        let p2 = fixtures::p2();
        assert!(p1.successors(&c(&[0, 0, 0, 3])).is_empty());
        assert_eq!(p1.successors(&c(&[1, 0, 0, 2])), BTreeSet::from([c(&[0, 0, 0, 3])]));
        assert_eq!(p2.successors(&c(&[0, 3, 0, 0])), BTreeSet::from([c(&[0, 2, 1, 0])]));
    }

    #[test]
    fn successors_agree_with_apply() {
        let p1 = fixtures::p1();
        for n in 0..6 {
            for cfg in Configuration::all_of_size(4, n) {
                let direct: BTreeSet<_> = (0..p1.transitions().len())
                    .filter_map(|t| p1.apply_transition(&cfg, t).ok())
                    .collect();
                assert_eq!(direct, p1.successors(&cfg));
                for s in &direct {
                    assert_eq!(s.size(), n);
                }
            }
        }
    }

    #[test]
    fn validation_errors() {
        let bad = Protocol::new("x", vec!["a".into()], vec![], vec![], vec!["o".into()], vec![0]);
        assert_eq!(bad.unwrap_err(), ProtocolError::NoInputs);
        let bad = Protocol::new(
            "x",
            vec!["a".into()],
            vec![Transition::observation(StateId(0), StateId(1), StateId(0))],
            vec![StateId(0)],
            vec!["o".into()],
            vec![0],
        );
        assert_eq!(bad.unwrap_err(), ProtocolError::InvalidState(1));
        let bad = Protocol::new("x", vec!["a".into()], vec![], vec![StateId(0)], vec!["o".into()], vec![]);
        assert!(matches!(bad, Err(ProtocolError::OutputMapArity { .. })));
    }

    #[test]
    fn unary_product_is_isomorphic() {
        let p2 = fixtures::p2();
        let prod = product(std::slice::from_ref(&p2), &OutputMux::identity(&p2)).unwrap();
        assert_eq!(prod.num_states(), p2.num_states());
        assert_eq!(prod.transitions().len(), p2.transitions().len());
        assert_eq!(prod.state_name(StateId(1)), "(q1)");
        assert_eq!(prod.inputs(), &[StateId(1)]);
        assert!(prod.is_io());
        for t in p2.transitions() {
            assert!(prod.transitions().contains(t));
        }
    }

    #[test]
    fn product_of_io_protocols_is_io() {
        let p2 = fixtures::p2();
        let mux = OutputMux::new(p2.outputs().to_vec(), 2, |o| o[0]);
        let prod = product(&[p2.clone(), p2.clone()], &mux).unwrap();
        assert_eq!(prod.num_states(), 16);
        assert!(prod.is_io());
    }

    #[test]
    fn product_transition_count_matches_enumeration() {
        let p2 = fixtures::p2();
        let rec = protocol_from_names(
            "r",
            &["u", "v"],
            &[("u", "u", "v", "u"), ("u", "v", "v", "v"), ("u", "v", "u", "u")],
            &["u"],
            &["false", "true"],
            &[("u", "false"), ("v", "true")],
        )
        .unwrap();
        let mux = OutputMux::new(vec!["false".into(), "true".into()], 2, |o| o[1]);
        let prod = product(&[p2.clone(), rec.clone()], &mux).unwrap();
        let mut expected = 0usize;
        for a1 in p2.state_ids() {
            for a2 in rec.state_ids() {
                for b1 in p2.state_ids() {
                    for b2 in rec.state_ids() {
                        let c1 = component_moves(&p2, a1, b1).len();
                        let c2 = component_moves(&rec, a2, b2).len();
                        expected += (c1 + 1) * (c2 + 1) - 1;
                    }
                }
            }
        }
        assert_eq!(prod.transitions().len(), expected);
        assert!(!prod.is_io());
    }

    #[test]
    fn mux_arity_checked() {
        let p2 = fixtures::p2();
        let mux = OutputMux::new(p2.outputs().to_vec(), 3, |o| o[0]);
        assert_eq!(
            product(&[p2.clone(), p2.clone()], &mux).unwrap_err(),
            ProtocolError::MuxArity { expected: 3, got: 2 }
        );
    }

    #[test]
    fn lockstep_product_covers_only_reachable_tuples() {
        let p2 = fixtures::p2();
        let mux = OutputMux::new(p2.outputs().to_vec(), 2, |o| o[0]);
        let prod = lockstep_product(&[p2.clone(), p2.clone()], &mux).unwrap();
        assert!(prod.is_io());
        // identical components move in lockstep: only diagonal tuples, q0 never produced
        assert_eq!(prod.num_states(), 3);
    }

    #[test]
    fn replay_examples() {
        let p2 = fixtures::p2();
        let e = DeanonymisedExecution::from_configuration(&c(&[0, 3, 0, 0]), vec![]);
        assert_eq!(replay(&p2, &e).unwrap(), vec![c(&[0, 3, 0, 0])]);

        let (exec, configs) = fixtures::p2_example_execution();
        assert_eq!(replay(&p2, &exec).unwrap(), configs);

        let bad = DeanonymisedExecution::from_configuration(
            &c(&[0, 3, 0, 0]),
            vec![Step { transition: 0, actor: 1, partner: 1 }],
        );
        assert!(matches!(replay(&p2, &bad), Err(ProtocolError::InvalidStep { index: 0, .. })));
    }

    #[test]
    fn replay_rejects_wrong_occupancy() {
        let p2 = fixtures::p2();
        // q2 --q2--> q3 while both agents sit in q1
        let t = p2.transitions().iter().position(|t| p2.render_transition(t) == "q2 q2 -> q3 q2").unwrap();
        let bad = DeanonymisedExecution::from_configuration(
            &c(&[0, 2, 0, 0]),
            vec![Step { transition: t, actor: 0, partner: 1 }],
        );
        let err = replay(&p2, &bad).unwrap_err();
        assert!(err.to_string().contains("invalid step at index 0"));
    }
}
