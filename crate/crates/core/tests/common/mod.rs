//! Explicit mechanism matrices shared by the integration tests.
#![allow(dead_code)]

/// k-ary randomized response over `d` symbols.
pub fn krr_matrix(eps0: f64, d: usize) -> Vec<Vec<f64>> {
    let e = eps0.exp();
    let z = e + d as f64 - 1.0;
    (0..d).map(|x| (0..d).map(|y| if x == y { e / z } else { 1.0 / z }).collect()).collect()
}

/// Local hashing with the cyclic hash family `h_s(x) = (x + s) mod l` over an
/// input domain of size `l`. Outputs are `(s, y)` pairs flattened as `s * l + y`.
pub fn local_hash_matrix(eps0: f64, l: usize) -> Vec<Vec<f64>> {
    let e = eps0.exp();
    let z = (e + l as f64 - 1.0) * l as f64;
    (0..l)
        .map(|x| {
            let mut row = vec![0.0; l * l];
            for s in 0..l {
                for y in 0..l {
                    row[s * l + y] = if y == (x + s) % l { e / z } else { 1.0 / z };
                }
            }
            row
        })
        .collect()
}

fn subsets(d: usize, k: usize) -> Vec<u64> {
    (0u64..(1 << d)).filter(|m| m.count_ones() as usize == k).collect()
}

fn choose(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

/// k-subset mechanism: every size-k subset of the domain is an output, with
/// weight `e^eps0` when it contains the input and 1 otherwise.
pub fn k_subset_matrix(eps0: f64, d: usize, k: usize) -> Vec<Vec<f64>> {
    let e = eps0.exp();
    let z = choose(d - 1, k - 1) * e + choose(d - 1, k);
    let outs = subsets(d, k);
    (0..d)
        .map(|x| outs.iter().map(|m| if m >> x & 1 == 1 { e / z } else { 1.0 / z }).collect())
        .collect()
}
