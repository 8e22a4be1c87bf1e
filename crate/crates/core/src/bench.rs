//! Microbenchmarks of the basic tree operations against a flat baseline.
//!
//! The baseline stores the same leaves in a `HashMap` keyed by path string and
//! implements every operation as a loop over keys. Tree `set` is persistent
//! (it returns a new tree); baseline `set` inserts in place.
//!
//! Each measurement runs 5 warm-up calls, then takes `reps` samples. A sample
//! times a batch of back-to-back calls sized so the batch lasts at least
//! [`MIN_SAMPLE`]; results are kept in a preallocated buffer and dropped after
//! the clock stops. Reported figures are per call.

use std::collections::HashMap;
use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::leaf::{self, TensorLeaf};
use crate::tree::{Entry, Path, TreeTensor};
use crate::treelize::{lift_cat, lift_split, lift_stack, MismatchPolicy};

pub const WARMUP: usize = 5;
pub const MIN_REPS: usize = 30;
pub const MIN_SAMPLE: Duration = Duration::from_micros(2);
pub const CSV_HEADER: &str = "op,n_leaves,leaf_elems,impl,mean_ns,stddev_ns,reps";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchOp {
    Get,
    Set,
    Init,
    DeepCopy,
    Stack,
    Cat,
    Split,
}

impl BenchOp {
    pub const ALL: [BenchOp; 7] = [
        BenchOp::Get,
        BenchOp::Set,
        BenchOp::Init,
        BenchOp::DeepCopy,
        BenchOp::Stack,
        BenchOp::Cat,
        BenchOp::Split,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Get => "get",
            BenchOp::Set => "set",
            BenchOp::Init => "init",
            BenchOp::DeepCopy => "deepcopy",
            BenchOp::Stack => "stack",
            BenchOp::Cat => "cat",
            BenchOp::Split => "split",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown bench op `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Impl {
    Tree,
    Naive,
}

impl Impl {
    pub fn name(self) -> &'static str {
        match self {
            Impl::Tree => "tree",
            Impl::Naive => "naive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub op: BenchOp,
    pub n_leaves: usize,
    pub leaf_elems: usize,
    pub implementation: Impl,
    pub mean_ns: f64,
    pub stddev_ns: f64,
    pub reps: usize,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.1},{:.1},{}",
            self.op,
            self.n_leaves,
            self.leaf_elems,
            self.implementation.name(),
            self.mean_ns,
            self.stddev_ns,
            self.reps
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("at least {MIN_REPS} repetitions are required, got {0}")]
    TooFewReps(usize),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

fn leaf_for(i: usize, elems: usize) -> TensorLeaf {
    let data: Vec<f32> = (0..elems).map(|j| (i * elems + j) as f32 * 0.5).collect();
    TensorLeaf::new(&[elems], data).expect("length matches")
}

/// Paths of a balanced binary tree with `n` leaves and keys `a`/`b`, in
/// canonical order. A single leaf still sits one level below the root.
pub fn synth_paths(n: usize) -> Vec<String> {
    fn go(n: usize, prefix: &str, out: &mut Vec<String>) {
        if n == 1 {
            out.push(prefix.to_string());
            return;
        }
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}/{k}") };
        go(n.div_ceil(2), &join("a"), out);
        go(n / 2, &join("b"), out);
    }
    let mut out = Vec::with_capacity(n);
    if n == 1 {
        out.push("a".to_string());
    } else if n > 1 {
        go(n, "", &mut out);
    }
    out
}

fn entries(n: usize, leaves: &mut impl Iterator<Item = TensorLeaf>) -> Entry {
    if n == 1 {
        return Entry::Leaf(leaves.next().expect("enough leaves"));
    }
    Entry::Tree(vec![
        ("a".to_string(), entries(n.div_ceil(2), leaves)),
        ("b".to_string(), entries(n / 2, leaves)),
    ])
}

fn build_tree(n: usize, leaves: impl IntoIterator<Item = TensorLeaf>) -> TreeTensor {
    let mut it = leaves.into_iter();
    let pairs = match n {
        0 => Vec::new(),
        1 => vec![("a".to_string(), Entry::Leaf(it.next().expect("one leaf")))],
        _ => match entries(n, &mut it) {
            Entry::Tree(pairs) => pairs,
            Entry::Leaf(_) => unreachable!(),
        },
    };
    TreeTensor::build(pairs).expect("generated keys are valid")
}

/// Balanced binary tree of `n` f32 leaves with `elems` elements each.
pub fn synth_tree(n: usize, elems: usize) -> TreeTensor {
    build_tree(n, (0..n).map(|i| leaf_for(i, elems)))
}

/// The same leaves as [`synth_tree`] in a flat map keyed by path.
pub fn synth_flat(n: usize, elems: usize) -> HashMap<String, TensorLeaf> {
    synth_paths(n)
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, leaf_for(i, elems)))
        .collect()
}

/// Per-call mean and standard deviation in nanoseconds.
pub fn measure<O>(reps: usize, mut op: impl FnMut() -> O) -> (f64, f64) {
    for _ in 0..WARMUP {
        black_box(op());
    }
    let mut batch = 1usize;
    loop {
        let mut outs = Vec::with_capacity(batch);
        let t0 = Instant::now();
        for _ in 0..batch {
            outs.push(op());
        }
        let dt = t0.elapsed();
        drop(black_box(outs));
        if dt >= MIN_SAMPLE || batch >= 1 << 20 {
            break;
        }
        batch *= 2;
    }
    let mut samples = Vec::with_capacity(reps);
    let mut outs = Vec::with_capacity(batch);
    for _ in 0..reps {
        let t0 = Instant::now();
        for _ in 0..batch {
            outs.push(op());
        }
        let dt = t0.elapsed();
        black_box(&outs);
        outs.clear();
        samples.push(dt.as_nanos() as f64 / batch as f64);
    }
    let mean = samples.iter().sum::<f64>() / reps as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps.max(2) - 1) as f64;
    (mean, var.sqrt())
}

fn naive_gather(
    a: &HashMap<String, TensorLeaf>,
    b: &HashMap<String, TensorLeaf>,
    f: fn(&[&TensorLeaf], usize) -> Result<TensorLeaf, leaf::LeafError>,
) -> HashMap<String, TensorLeaf> {
    let mut out = HashMap::with_capacity(a.len());
    for (k, x) in a {
        let y = &b[k];
        out.insert(k.clone(), f(&[x, y], 0).expect("aligned leaves"));
    }
    out
}

fn naive_split(a: &HashMap<String, TensorLeaf>, chunk: usize) -> Vec<HashMap<String, TensorLeaf>> {
    let mut out: Vec<HashMap<String, TensorLeaf>> = Vec::new();
    for (k, x) in a {
        let pieces = leaf::split(x, chunk, 0).expect("valid chunk");
        if out.is_empty() {
            out = (0..pieces.len()).map(|_| HashMap::with_capacity(a.len())).collect();
        }
        for (m, p) in out.iter_mut().zip(pieces) {
            m.insert(k.clone(), p);
        }
    }
    out
}

fn record(op: BenchOp, n: usize, m: usize, implementation: Impl, reps: usize, (mean_ns, stddev_ns): (f64, f64)) -> BenchRecord {
    BenchRecord {
        op,
        n_leaves: n,
        leaf_elems: m,
        implementation,
        mean_ns,
        stddev_ns,
        reps,
    }
}

/// Times `op` on a tree of `n` leaves of `m` elements and on the flat
/// baseline. Returns the tree record first.
pub fn run(op: BenchOp, n: usize, m: usize, reps: usize) -> Result<[BenchRecord; 2], BenchError> {
    if reps < MIN_REPS {
        return Err(BenchError::TooFewReps(reps));
    }
    if n == 0 {
        return Err(BenchError::NotPositive("leaves"));
    }
    if m == 0 {
        return Err(BenchError::NotPositive("elems"));
    }
    let t1 = synth_tree(n, m);
    let t2 = synth_tree(n, m);
    let mut f1 = synth_flat(n, m);
    let f2 = synth_flat(n, m);
    let key = synth_paths(n).pop().expect("n > 0");
    let path: Path = key.parse().expect("generated path");
    let fresh = leaf_for(n, m);
    let strict = MismatchPolicy::Strict;
    let chunk = (m / 4).max(1);

    let (tree, naive) = match op {
        BenchOp::Get => (
            measure(reps, || t1.get(black_box(&path)).is_ok()),
            measure(reps, || f1.get(black_box(key.as_str())).is_some()),
        ),
        BenchOp::Set => (
            measure(reps, || t1.set(&path, fresh.clone()).expect("parent exists")),
            measure(reps, || {
                f1.insert(key.clone(), fresh.clone());
            }),
        ),
        BenchOp::Init => {
            let leaves: Vec<TensorLeaf> = t1.leaves().into_iter().map(|(_, l)| l.clone()).collect();
            let pairs: Vec<(String, TensorLeaf)> = f2.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            (
                measure(reps, || build_tree(n, leaves.iter().cloned())),
                measure(reps, || pairs.iter().cloned().collect::<HashMap<_, _>>()),
            )
        }
        BenchOp::DeepCopy => (
            measure(reps, || t1.deep_copy()),
            measure(reps, || f2.iter().map(|(k, v)| (k.clone(), v.deep_copy())).collect::<HashMap<_, _>>()),
        ),
        BenchOp::Stack => (
            measure(reps, || lift_stack(&[&t1, &t2], 0, &strict).expect("aligned trees")),
            measure(reps, || naive_gather(&f1, &f2, leaf::stack)),
        ),
        BenchOp::Cat => (
            measure(reps, || lift_cat(&[&t1, &t2], 0, &strict).expect("aligned trees")),
            measure(reps, || naive_gather(&f1, &f2, leaf::cat)),
        ),
        BenchOp::Split => (
            measure(reps, || lift_split(&t1, chunk, 0).expect("uniform leaves")),
            measure(reps, || naive_split(&f1, chunk)),
        ),
    };
    Ok([
        record(op, n, m, Impl::Tree, reps, tree),
        record(op, n, m, Impl::Naive, reps, naive),
    ])
}

/// Leaf counts of the scaling sweep.
pub const SWEEP_LEAVES: [usize; 4] = [4, 16, 64, 256];

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `op` at every leaf count in `leaves` and returns all records with the
/// tree implementation's scaling slope.
pub fn sweep(op: BenchOp, leaves: &[usize], m: usize, reps: usize) -> Result<(Vec<BenchRecord>, f64), BenchError> {
    let mut records = Vec::with_capacity(leaves.len() * 2);
    for &n in leaves {
        records.extend(run(op, n, m, reps)?);
    }
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.implementation == Impl::Tree)
        .map(|r| (r.n_leaves as f64, r.mean_ns))
        .collect();
    Ok((records, loglog_slope(&points)))
}
