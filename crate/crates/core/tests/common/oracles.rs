//! Brute-force segmentation metric references.

/// Segment id of every unit, built by walking the masses.
pub fn owner(m: &[usize]) -> Vec<usize> {
    let mut v = Vec::new();
    for (s, &len) in m.iter().enumerate() {
        for _ in 0..len {
            v.push(s);
        }
    }
    v
}

pub fn pk_oracle(r: &[usize], h: &[usize], k: usize) -> Option<f64> {
    let (ro, ho) = (owner(r), owner(h));
    let n = ro.len();
    let mut probes = 0;
    let mut miss = 0;
    for i in 0..n {
        for j in i + 1..n {
            if j - i != k {
                continue;
            }
            probes += 1;
            if (ro[i] == ro[j]) != (ho[i] == ho[j]) {
                miss += 1;
            }
        }
    }
    (probes > 0).then(|| miss as f64 / probes as f64)
}

pub fn cuts(m: &[usize]) -> Vec<usize> {
    m.iter()
        .scan(0, |a, &x| {
            *a += x;
            Some(*a)
        })
        .take(m.len() - 1)
        .collect()
}

/// Exact matches are fixed first; every matching of the remaining
/// boundaries with offsets `< n_t` is then enumerated and the cheapest kept.
pub fn b_oracle(r: &[usize], h: &[usize], n_t: usize) -> f64 {
    let rc = cuts(r);
    let hc = cuts(h);
    let matches = rc.iter().filter(|x| hc.contains(x)).count();
    let ru: Vec<usize> = rc.iter().copied().filter(|x| !hc.contains(x)).collect();
    let hu: Vec<usize> = hc.iter().copied().filter(|x| !rc.contains(x)).collect();

    fn best(ru: &[usize], hu: &[usize], taken: &mut Vec<bool>, n_t: usize) -> (f64, usize) {
        // returns (cost, operations) for the cheapest completion
        let Some((&first, rest)) = ru.split_first() else {
            let left = taken.iter().filter(|t| !**t).count();
            return (left as f64, left);
        };
        let (c, o) = best(rest, hu, taken, n_t);
        let mut out = (c + 1.0, o + 1);
        for j in 0..hu.len() {
            let d = first.abs_diff(hu[j]);
            if !taken[j] && d < n_t {
                taken[j] = true;
                let (c, o) = best(rest, hu, taken, n_t);
                taken[j] = false;
                let cand = (c + d as f64 / n_t as f64, o + 1);
                if cand.0 < out.0 || (cand.0 == out.0 && cand.1 > out.1) {
                    out = cand;
                }
            }
        }
        out
    }

    let (cost, ops) = best(&ru, &hu, &mut vec![false; hu.len()], n_t);
    let ops = ops + matches;
    if ops == 0 {
        1.0
    } else {
        1.0 - cost / ops as f64
    }
}

pub fn prf_oracle(r: &[usize], h: &[usize]) -> (f64, f64, f64) {
    let (rc, hc) = (cuts(r), cuts(h));
    let tp = rc.iter().filter(|x| hc.contains(x)).count() as f64;
    let p = if hc.is_empty() { 0.0 } else { tp / hc.len() as f64 };
    let rec = if rc.is_empty() { 0.0 } else { tp / rc.len() as f64 };
    let f = if p + rec == 0.0 { 0.0 } else { 2.0 * p * rec / (p + rec) };
    (p, rec, f)
}
