//! Seeded simulation under the uniform random scheduler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::explicit::{ExplicitError, ReachGraph};
use crate::protocol::{Configuration, DeanonymisedExecution, Protocol, StateId, Step};
use crate::sets::Condition;

/// A simulated run: the configurations visited and the agent-level steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub configs: Vec<Configuration>,
    pub execution: DeanonymisedExecution,
    /// True iff the run stopped because no transition was enabled.
    pub terminated: bool,
}

impl Trace {
    pub fn steps(&self) -> &[Step] {
        self.execution.steps()
    }

    pub fn last(&self) -> &Configuration {
        self.configs.last().expect("trace has an initial configuration")
    }
}

struct Runner<'a> {
    p: &'a Protocol,
    config: Configuration,
    /// Agent ids currently in each state.
    by_state: Vec<Vec<usize>>,
    steps: Vec<Step>,
    configs: Vec<Configuration>,
}

impl<'a> Runner<'a> {
    fn new(p: &'a Protocol, c0: &Configuration) -> Self {
        let mut by_state = vec![Vec::new(); p.num_states()];
        for (agent, q) in crate::multiset::enumerate(c0.counts()).into_iter().enumerate() {
            by_state[q].push(agent);
        }
        Self { p, config: c0.clone(), by_state, steps: Vec::new(), configs: vec![c0.clone()] }
    }

    /// Fires one uniformly chosen (transition, ordered agent pair); false if
    /// nothing is enabled.
    fn step(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let enabled = self.p.enabled_transitions(&self.config);
        let weight = |t: usize| -> u64 {
            let tr = &self.p.transitions()[t];
            let a = u64::from(self.config.get(tr.actor));
            let b = u64::from(self.config.get(tr.partner));
            if tr.actor == tr.partner {
                a * a.saturating_sub(1)
            } else {
                a * b
            }
        };
        let total: u64 = enabled.iter().map(|&t| weight(t)).sum();
        if total == 0 {
            return false;
        }
        let mut pick = rng.gen_range(0..total);
        let t = *enabled
            .iter()
            .find(|&&t| {
                let w = weight(t);
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .expect("weighted pick");
        let tr = self.p.transitions()[t];
        let actors = &self.by_state[tr.actor.0];
        let ai = rng.gen_range(0..actors.len());
        let actor = actors[ai];
        let partners = &self.by_state[tr.partner.0];
        let partner = if tr.actor == tr.partner {
            let mut j = rng.gen_range(0..partners.len() - 1);
            if j >= ai {
                j += 1;
            }
            partners[j]
        } else {
            partners[rng.gen_range(0..partners.len())]
        };
        self.relocate(actor, tr.actor, tr.actor_next);
        self.relocate(partner, tr.partner, tr.partner_next);
        self.config = self.p.apply_transition(&self.config, t).expect("enabled transition");
        self.configs.push(self.config.clone());
        self.steps.push(Step { transition: t, actor, partner });
        true
    }

    fn relocate(&mut self, agent: usize, from: StateId, to: StateId) {
        let list = &mut self.by_state[from.0];
        let pos = list.iter().position(|&a| a == agent).expect("agent in state");
        list.swap_remove(pos);
        self.by_state[to.0].push(agent);
    }

    fn finish(self, c0: &Configuration, terminated: bool) -> Trace {
        Trace {
            configs: self.configs,
            execution: DeanonymisedExecution::from_configuration(c0, self.steps),
            terminated,
        }
    }
}

/// Simulates up to `max_steps` interactions from `c0`.
pub fn run(p: &Protocol, c0: &Configuration, seed: u64, max_steps: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_with(p, c0, &mut rng, max_steps, |_| false)
}

/// Simulates until `stop` holds on the current configuration, nothing is
/// enabled, or `max_steps` interactions have happened.
pub fn run_with(
    p: &Protocol,
    c0: &Configuration,
    rng: &mut ChaCha8Rng,
    max_steps: usize,
    mut stop: impl FnMut(&Configuration) -> bool,
) -> Trace {
    let mut runner = Runner::new(p, c0);
    let mut terminated = false;
    while !stop(&runner.config) && runner.steps.len() < max_steps {
        if !runner.step(rng) {
            terminated = true;
            break;
        }
    }
    runner.finish(c0, terminated)
}

/// Convergence statistics for one population size.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeStats {
    pub size: u32,
    pub runs: usize,
    /// Runs that reached a configuration ensuring the condition.
    pub converged: usize,
    /// Runs that did not, either out of steps or stuck elsewhere.
    pub unconverged: usize,
    pub mean_steps: f64,
    pub median_steps: usize,
    pub p90_steps: usize,
    pub max_steps: usize,
}

impl SizeStats {
    pub fn rate(&self) -> f64 {
        if self.runs == 0 {
            1.0
        } else {
            self.converged as f64 / self.runs as f64
        }
    }
}

/// Runs `runs` simulations per size from uniformly drawn input
/// configurations and records how many reach a configuration all of whose
/// successors satisfy `s` (decided on the explicit reachability graph).
pub fn ensure_convergence_stats(
    p: &Protocol,
    s: &Condition,
    sizes: impl IntoIterator<Item = u32>,
    runs: usize,
    seed: u64,
    max_steps: usize,
    budget: usize,
) -> Result<Vec<SizeStats>, ExplicitError> {
    let bound = s.bind(p)?;
    let mut out = Vec::new();
    for n in sizes {
        let inputs = p.input_configurations(n);
        let g = ReachGraph::from_roots(p, &inputs, budget)?;
        let sat: Vec<bool> = g.nodes().iter().map(|c| bound.holds(c)).collect();
        let ensuring = g.ensuring_nodes(&sat);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(n) << 32));
        let mut lengths = Vec::new();
        let mut unconverged = 0;
        for _ in 0..runs {
            let c0 = &inputs[rng.gen_range(0..inputs.len())];
            let is_ensuring = |c: &Configuration| ensuring[g.index_of(c).expect("reachable configuration")];
            let trace = run_with(p, c0, &mut rng, max_steps, is_ensuring);
            if is_ensuring(trace.last()) {
                lengths.push(trace.steps().len());
            } else {
                unconverged += 1;
            }
        }
        lengths.sort_unstable();
        let pct = |q: f64| -> usize {
            if lengths.is_empty() {
                0
            } else {
                lengths[((lengths.len() - 1) as f64 * q).round() as usize]
            }
        };
        let mean = if lengths.is_empty() { 0.0 } else { lengths.iter().sum::<usize>() as f64 / lengths.len() as f64 };
        out.push(SizeStats {
            size: n,
            runs,
            converged: lengths.len(),
            unconverged,
            mean_steps: mean,
            median_steps: pct(0.5),
            p90_steps: pct(0.9),
            max_steps: lengths.last().copied().unwrap_or(0),
        });
    }
    Ok(out)
}
