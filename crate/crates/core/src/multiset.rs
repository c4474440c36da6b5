//! Small helpers for multisets represented as dense count vectors.

/// All count vectors of length `parts` whose entries sum to `total`,
/// in descending lexicographic order (first coordinate largest first).
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut current = vec![0u32; parts];
    fill(total, 0, &mut current, &mut out);
    out
}

fn fill(remaining: u32, idx: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if idx + 1 == current.len() {
        current[idx] = remaining;
        out.push(current.clone());
        return;
    }
    for v in (0..=remaining).rev() {
        current[idx] = v;
        fill(remaining - v, idx + 1, current, out);
    }
    current[idx] = 0;
}

/// Number of count vectors of length `parts` summing to `total`,
/// saturating at `u64::MAX`.
pub fn composition_count(total: u32, parts: usize) -> u64 {
    if parts == 0 {
        return u64::from(total == 0);
    }
    // C(total + parts - 1, parts - 1)
    let n = total as u128 + parts as u128 - 1;
    let k = (parts as u128 - 1).min(total as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Total number of elements of a count vector.
pub fn size(counts: &[u32]) -> u64 {
    counts.iter().map(|&c| c as u64).sum()
}

/// Expands a count vector into the sorted sequence of indices it contains,
/// each index repeated according to its multiplicity.
pub fn enumerate(counts: &[u32]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect()
}

/// Renders a count vector as `⟦a,a,b⟧` using the given names.
pub fn render(counts: &[u32], names: &[String]) -> String {
    let items: Vec<&str> = enumerate(counts).into_iter().map(|i| names[i].as_str()).collect();
    format!("⟦{}⟧", items.join(","))
}
