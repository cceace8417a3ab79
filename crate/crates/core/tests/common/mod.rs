//! Slow reference implementations used to check the fast paths.
#![allow(dead_code)]

use normpool::evaluation::ScoreMatrix;

/// Euclidean projection onto the simplex by trying every support set and
/// keeping the closest feasible one.
pub fn sparsemax_brute_force(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    assert!((1..=16).contains(&n));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let tau = (members.iter().map(|&i| z[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut p = vec![0.0; n];
        let mut feasible = true;
        for &i in &members {
            p[i] = z[i] - tau;
            if p[i] < 0.0 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        let dist: f64 = p.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, p));
        }
    }
    best.expect("singleton supports are always feasible").1
}

/// Gallery indices of probe `i` ordered by descending score, then
/// ascending index, via a full sort.
pub fn full_sort_ranking(scores: &ScoreMatrix, i: usize) -> Vec<usize> {
    let row = scores.row(i);
    let mut order: Vec<usize> = (0..row.len()).collect();
    // Numeric comparison, so that 0.0 and -0.0 tie.
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("finite scores").then(a.cmp(&b)));
    order
}

/// 1-based rank of each probe's mate under the full-sort ranking.
pub fn mate_ranks_oracle(scores: &ScoreMatrix) -> Vec<usize> {
    (0..scores.n_probes())
        .map(|i| {
            let label = &scores.probe_labels()[i];
            full_sort_ranking(scores, i)
                .iter()
                .position(|&j| &scores.gallery_labels()[j] == label)
                .expect("probe has a mate")
                + 1
        })
        .collect()
}

/// Top-1 (gallery index, score) under the full-sort ranking.
pub fn top1_oracle(scores: &ScoreMatrix, i: usize) -> (usize, f64) {
    let j = full_sort_ranking(scores, i)[0];
    (j, scores.get(i, j))
}

fn nonmated_tops(nonmated: &ScoreMatrix) -> Vec<f64> {
    (0..nonmated.n_probes()).map(|i| top1_oracle(nonmated, i).1).collect()
}

fn fraction_at_or_above(tops: &[f64], t: f64) -> f64 {
    tops.iter().filter(|&&s| s >= t).count() as f64 / tops.len() as f64
}

/// Fraction of non-mated probes whose top score reaches `t`.
pub fn fpir_oracle(nonmated: &ScoreMatrix, t: f64) -> f64 {
    fraction_at_or_above(&nonmated_tops(nonmated), t)
}

/// Largest FPIR not exceeding `target` over every threshold that changes
/// the accepted set, including one above all non-mated scores.
pub fn best_achievable_fpir(nonmated: &ScoreMatrix, target: f64) -> f64 {
    let tops = nonmated_tops(nonmated);
    tops.iter()
        .map(|&t| fraction_at_or_above(&tops, t))
        .filter(|&f| f <= target)
        .fold(0.0, f64::max)
}

/// FNIR at threshold `t` by direct counting.
pub fn fnir_oracle(mated: &ScoreMatrix, t: f64) -> f64 {
    let misses = (0..mated.n_probes())
        .filter(|&i| {
            let (j, s) = top1_oracle(mated, i);
            mated.gallery_labels()[j] != mated.probe_labels()[i] || s < t
        })
        .count();
    misses as f64 / mated.n_probes() as f64
}
