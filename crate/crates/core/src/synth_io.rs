//! Synthesis of immediate observation protocols ensuring a size-flexible
//! counting output condition.

use crate::multiset;
use crate::protocol::{lockstep_product, OutputMux, Protocol, StateId, Transition};
use crate::sets::{flexible_witnesses, CountingSet};
use crate::synth_pp::{SynthError, Synthesis};

fn check_arity(d: &[u32], dims: &[String]) -> Result<(), SynthError> {
    if d.len() == dims.len() {
        Ok(())
    } else {
        Err(SynthError::Arity { expected: dims.len(), got: d.len() })
    }
}

fn chain(name: &str, outputs: &[usize], dims: &[String]) -> Result<Protocol, SynthError> {
    let n = outputs.len();
    let states = (1..=n).map(|j| format!("q{j}")).collect();
    let ts = (0..n - 1).map(|j| Transition::observation(StateId(j), StateId(j), StateId(j + 1))).collect();
    Ok(Protocol::new(name, states, ts, vec![StateId(0)], dims.to_vec(), outputs.to_vec())?)
}

/// Chain `q_1 → … → q_|D|` where an agent in `q_j` advances on seeing
/// another agent in `q_j`; `q_j` outputs the `j`-th element of `D`.
pub fn build_point_protocol(d: &[u32], dims: &[String]) -> Result<Protocol, SynthError> {
    check_arity(d, dims)?;
    let seq = multiset::enumerate(d);
    if seq.is_empty() {
        return Err(SynthError::EmptyPoint);
    }
    chain("point", &seq, dims)
}

/// The point chain for `D` extended by one more state `q_{|D|+1}` that
/// outputs `x` and absorbs every agent beyond the first `|D|`.
pub fn build_ray_protocol(d: &[u32], x: usize, dims: &[String]) -> Result<Protocol, SynthError> {
    check_arity(d, dims)?;
    if x >= dims.len() {
        return Err(SynthError::Arity { expected: dims.len(), got: x + 1 });
    }
    let mut seq = multiset::enumerate(d);
    seq.push(x);
    chain("ray", &seq, dims)
}

/// Immediate observation protocol computing "population size = j".
///
/// States are `(level, seen)` with both in `1..=j+1`. An agent observing
/// another agent on its own level `i ≤ j` climbs to `i+1`; otherwise it
/// raises `seen` to the largest level or `seen` it observes. The verdict is
/// `seen == j`.
pub fn build_size_eq_recognizer(j: u32) -> Result<Protocol, SynthError> {
    let top = j + 1;
    let mut pairs = Vec::new();
    for level in 1..=top {
        for seen in level..=top {
            pairs.push((level, seen));
        }
    }
    let id = |(l, s): (u32, u32)| StateId(pairs.iter().position(|&p| p == (l, s)).expect("state"));
    let mut ts = Vec::new();
    for &(i, s) in &pairs {
        for &(i2, s2) in &pairs {
            let next = if i2 == i && i <= j { (i + 1, s.max(s2).max(i + 1)) } else { (i, s.max(s2).max(i2)) };
            if next != (i, s) {
                ts.push(Transition::observation(id((i, s)), id((i2, s2)), id(next)));
            }
        }
    }
    let names = pairs.iter().map(|&(l, s)| format!("l{l}s{s}")).collect();
    let output_map = pairs.iter().map(|&(_, s)| usize::from(s == j)).collect();
    Ok(Protocol::new(
        format!("eq{j}"),
        names,
        ts,
        vec![id((1, 1))],
        vec!["false".into(), "true".into()],
        output_map,
    )?)
}

/// Immediate observation protocol ensuring the size-flexible counting set
/// `s` over output values.
pub fn synthesize_io_ensurer(s: &CountingSet) -> Result<Synthesis, SynthError> {
    let w = flexible_witnesses(s)?;
    let dims = s.dims().to_vec();
    let d_size = multiset::size(&w.corner) as usize;
    let mut header = vec![
        format!("io ensurer over outputs {}", dims.join(",")),
        format!("D = {}", multiset::render(&w.corner, &dims)),
        format!("x = {}", dims[w.ray_dim]),
    ];
    let mut components = vec![build_ray_protocol(&w.corner, w.ray_dim, &dims)?.with_name("ray")];
    let mut recognizers = Vec::new();
    for j in 1..d_size {
        header.push(format!("witness {j} = {}", multiset::render(&w.small[j], &dims)));
        components.push(build_point_protocol(&w.small[j], &dims)?.with_name(format!("point{j}")));
        recognizers.push(build_size_eq_recognizer(j as u32)?);
    }
    let m = recognizers.len();
    components.extend(recognizers);
    let mux = OutputMux::new(dims, 1 + 2 * m, move |outs: &[usize]| {
        (0..m).find(|&j| outs[1 + m + j] == 1).map_or(outs[0], |j| outs[1 + j])
    });
    let protocol = lockstep_product(&components, &mux)?.with_name("io-ensurer");
    header.push(format!("{} states, {} transitions", protocol.num_states(), protocol.transitions().len()));
    Ok(Synthesis { protocol, header })
}
