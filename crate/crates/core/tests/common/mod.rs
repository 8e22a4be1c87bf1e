//! Seeded generators and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treetensor::func::Structure;
use treetensor::tree::Children;
use treetensor::{Constraint, DType, Device, Key, LeafAtom, Node, NodeAtom, Path, TensorLeaf, TreeTensor};

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const KEYS: [&str; 8] = ["a", "b", "c", "d", "e", "x", "y", "z"];

pub fn key(s: &str) -> Key {
    Key::new(s).unwrap()
}

pub fn path(s: &str) -> Path {
    s.parse().unwrap()
}

/// Dtype and shape of a leaf position, without values.
#[derive(Clone, Debug, PartialEq)]
pub struct Spec {
    pub dtype: DType,
    pub shape: Vec<usize>,
}

pub type Skeleton = Node<Spec>;

#[derive(Clone, Debug)]
pub struct TreeCfg {
    pub max_depth: usize,
    pub max_leaves: usize,
    pub max_elems: usize,
    pub dtypes: Vec<DType>,
    pub min_ndim: usize,
    pub max_ndim: usize,
    /// Shared axis-0 size for every leaf; forces `min_ndim >= 1`.
    pub lead: Option<usize>,
    pub allow_empty: bool,
}

impl Default for TreeCfg {
    fn default() -> Self {
        TreeCfg {
            max_depth: 4,
            max_leaves: 16,
            max_elems: 64,
            dtypes: vec![DType::F64, DType::I64],
            min_ndim: 0,
            max_ndim: 3,
            lead: None,
            allow_empty: false,
        }
    }
}

pub fn gen_shape(rng: &mut Rng8, cfg: &TreeCfg) -> Vec<usize> {
    let min = if cfg.lead.is_some() { cfg.min_ndim.max(1) } else { cfg.min_ndim };
    let ndim = rng.gen_range(min..=cfg.max_ndim.max(min));
    let mut shape = Vec::with_capacity(ndim);
    let mut prod = 1;
    for i in 0..ndim {
        let d = match (i, cfg.lead) {
            (0, Some(d)) => d,
            _ => rng.gen_range(1..=4.min(cfg.max_elems / prod).max(1)),
        };
        prod *= d.max(1);
        shape.push(d);
    }
    shape
}

fn gen_node(rng: &mut Rng8, cfg: &TreeCfg, depth: usize, budget: &mut usize) -> Option<Skeleton> {
    if *budget == 0 {
        return None;
    }
    let leaf = |rng: &mut Rng8, budget: &mut usize| {
        *budget -= 1;
        Node::Value(Spec {
            dtype: *cfg.dtypes.choose(rng).unwrap(),
            shape: gen_shape(rng, cfg),
        })
    };
    if depth >= cfg.max_depth || rng.gen_bool(0.5) {
        return Some(leaf(rng, budget));
    }
    let lo = if cfg.allow_empty { 0 } else { 1 };
    let children = gen_children(rng, cfg, depth, budget, lo);
    if children.is_empty() && !cfg.allow_empty {
        return (*budget > 0).then(|| leaf(rng, budget));
    }
    Some(Node::Tree(children))
}

fn gen_children(rng: &mut Rng8, cfg: &TreeCfg, depth: usize, budget: &mut usize, lo: usize) -> Children<Spec> {
    let n = rng.gen_range(lo..=4);
    let mut out = BTreeMap::new();
    for k in KEYS.choose_multiple(rng, n) {
        if let Some(child) = gen_node(rng, cfg, depth + 1, budget) {
            out.insert(key(k), Arc::new(child));
        }
    }
    out
}

/// A random tree-node skeleton holding at least one leaf.
pub fn skeleton(rng: &mut Rng8, cfg: &TreeCfg) -> Skeleton {
    loop {
        let mut budget = rng.gen_range(1..=cfg.max_leaves);
        let root = Node::Tree(gen_children(rng, cfg, 0, &mut budget, 1));
        if root.leaf_count() > 0 {
            return root;
        }
    }
}

pub fn values(rng: &mut Rng8, spec: &Spec, nonzero: bool) -> TensorLeaf {
    let n: usize = spec.shape.iter().product();
    let s = &spec.shape;
    match spec.dtype {
        DType::F64 => TensorLeaf::new(s, (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect::<Vec<f64>>()),
        DType::F32 => TensorLeaf::new(s, (0..n).map(|_| rng.gen_range(-4.0f32..4.0)).collect::<Vec<f32>>()),
        DType::I64 => TensorLeaf::new(
            s,
            (0..n)
                .map(|_| loop {
                    let v = rng.gen_range(-20i64..=20);
                    if !nonzero || v != 0 {
                        break v;
                    }
                })
                .collect::<Vec<i64>>(),
        ),
        DType::Bool => TensorLeaf::new(s, (0..n).map(|_| rng.gen_bool(0.5)).collect::<Vec<bool>>()),
    }
    .unwrap()
}

pub fn instantiate(rng: &mut Rng8, sk: &Skeleton, nonzero: bool) -> TreeTensor {
    let node = sk.try_map::<_, ()>(&mut |_, spec| Ok(values(rng, spec, nonzero))).unwrap();
    TreeTensor::from_node(node).unwrap()
}

pub fn random_tree(rng: &mut Rng8, cfg: &TreeCfg) -> TreeTensor {
    let sk = skeleton(rng, cfg);
    instantiate(rng, &sk, false)
}

/// Same structure and shapes, dtypes redrawn from `dtypes`.
pub fn reskin(rng: &mut Rng8, sk: &Skeleton, dtypes: &[DType]) -> Skeleton {
    sk.map(|s| Spec {
        dtype: *dtypes.choose(rng).unwrap(),
        shape: s.shape.clone(),
    })
}

/// Rebuilds a tree from `(path, leaf)` pairs. Intermediate nodes come into
/// existence through their descendants only.
pub fn rebuild(pairs: Vec<(Path, TensorLeaf)>) -> TreeTensor {
    enum Draft {
        Leaf(TensorLeaf),
        Tree(BTreeMap<Key, Draft>),
    }
    fn into_node(d: Draft) -> Node {
        match d {
            Draft::Leaf(l) => Node::Value(l),
            Draft::Tree(m) => Node::Tree(m.into_iter().map(|(k, v)| (k, Arc::new(into_node(v)))).collect()),
        }
    }
    let mut root = BTreeMap::new();
    for (p, leaf) in pairs {
        let (last, init) = p.keys().split_last().expect("leaf below the root");
        let mut cur = &mut root;
        for k in init {
            let e = cur.entry(k.clone()).or_insert_with(|| Draft::Tree(BTreeMap::new()));
            cur = match e {
                Draft::Tree(m) => m,
                Draft::Leaf(_) => panic!("leaf above another leaf at {p}"),
            };
        }
        cur.insert(last.clone(), Draft::Leaf(leaf));
    }
    TreeTensor::from_node(into_node(Draft::Tree(root))).unwrap()
}

/// Values chosen to stress number formatting: extremes, subnormals, signed
/// zero, infinities.
pub fn wild_leaf(rng: &mut Rng8, allow_nan: bool) -> TensorLeaf {
    const F64S: [f64; 12] = [
        0.0,
        -0.0,
        0.1,
        -2.5e-310,
        5e-324,
        f64::MAX,
        f64::MIN,
        f64::MIN_POSITIVE,
        f64::INFINITY,
        f64::NEG_INFINITY,
        1.0 / 3.0,
        123456789.0,
    ];
    const F32S: [f32; 9] = [0.0, -0.0, 0.1, 1e-45, f32::MAX, f32::MIN, f32::INFINITY, 16777217.0, 1.0 / 3.0];
    let spec = Spec {
        dtype: *DType::ALL.choose(rng).unwrap(),
        shape: gen_shape(rng, &TreeCfg::default()),
    };
    let n: usize = spec.shape.iter().product();
    let s = &spec.shape;
    let mut leaf = match spec.dtype {
        DType::F64 => TensorLeaf::new(
            s,
            (0..n)
                .map(|_| match rng.gen_range(0..4) {
                    0 => *F64S.choose(rng).unwrap(),
                    1 if allow_nan => f64::NAN,
                    _ => f64::from_bits(rng.gen::<u64>() & !(0x7ff << 52) | (rng.gen_range(0x300u64..0x500) << 52)),
                })
                .collect::<Vec<f64>>(),
        ),
        DType::F32 => TensorLeaf::new(
            s,
            (0..n)
                .map(|_| match rng.gen_range(0..3) {
                    0 => *F32S.choose(rng).unwrap(),
                    _ => rng.gen_range(-1e6f32..1e6),
                })
                .collect::<Vec<f32>>(),
        ),
        DType::I64 => TensorLeaf::new(
            s,
            (0..n)
                .map(|_| match rng.gen_range(0..4) {
                    0 => *[i64::MIN, i64::MAX, 0, -1].choose(rng).unwrap(),
                    _ => rng.gen(),
                })
                .collect::<Vec<i64>>(),
        ),
        DType::Bool => TensorLeaf::new(s, (0..n).map(|_| rng.gen()).collect::<Vec<bool>>()),
    }
    .unwrap();
    if rng.gen_bool(0.2) {
        leaf = leaf.with_device(Device::new(*["cuda:0", "tpu:3", "cpu"].choose(rng).unwrap()));
    }
    leaf
}

/// A tree with wild values and possibly empty subtrees.
pub fn wild_tree(rng: &mut Rng8, allow_nan: bool) -> TreeTensor {
    let cfg = TreeCfg {
        allow_empty: true,
        ..TreeCfg::default()
    };
    let sk = skeleton(rng, &cfg);
    let node = sk.try_map::<_, ()>(&mut |_, _| Ok(wild_leaf(rng, allow_nan))).unwrap();
    TreeTensor::from_node(node).unwrap()
}

/// Paths of every node, tree nodes and value nodes alike, root first.
pub fn all_paths(n: &Node) -> Vec<Path> {
    fn go(n: &Node, here: &mut Vec<Key>, out: &mut Vec<Path>) {
        out.push(Path::new(here.clone()));
        if let Some(ch) = n.children() {
            for (k, c) in ch {
                here.push(k.clone());
                go(c, here, out);
                here.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::new(), &mut out);
    out
}

pub fn tree_paths(n: &Node) -> Vec<Path> {
    all_paths(n)
        .into_iter()
        .filter(|p| !n.get(p.keys()).unwrap().is_value())
        .collect()
}

/// Leaf atoms over a small parameter range so that implications and
/// satisfactions actually occur.
pub fn leaf_atom(rng: &mut Rng8) -> LeafAtom {
    match rng.gen_range(0..5) {
        0 => LeafAtom::DtypeIs(*[DType::F32, DType::F64].choose(rng).unwrap()),
        1 => LeafAtom::NdimIs(rng.gen_range(1..=2)),
        2 => LeafAtom::DimEquals {
            axis: rng.gen_range(0..=1),
            size: rng.gen_range(2..=3),
        },
        3 => LeafAtom::DimAtLeast {
            axis: rng.gen_range(0..=1),
            size: rng.gen_range(1..=3),
        },
        _ => LeafAtom::DeviceIs(Device::new(*["cpu", "cuda:0"].choose(rng).unwrap())),
    }
}

pub fn node_atom(rng: &mut Rng8, pool: &[Path]) -> NodeAtom {
    let pick = |rng: &mut Rng8| -> Vec<Path> {
        let n = rng.gen_range(1..=3.min(pool.len()).max(1));
        if pool.is_empty() {
            vec![path("a")]
        } else {
            pool.choose_multiple(rng, n).cloned().collect()
        }
    };
    match rng.gen_range(0..3) {
        0 => NodeAtom::LeafCountIs(rng.gen_range(0..=4)),
        1 => NodeAtom::shapes_equal(pick(rng)),
        _ => NodeAtom::shared_prefix(pick(rng), rng.gen_range(0..=2)),
    }
}

pub fn simple_constraint(rng: &mut Rng8, pool: &[Path]) -> Constraint {
    match rng.gen_range(0..5) {
        0 | 1 => Constraint::inherit(leaf_atom(rng)),
        2 | 3 => Constraint::non_inherit(leaf_atom(rng)),
        _ => Constraint::non_inherit(node_atom(rng, pool)),
    }
}

/// A sum of up to four simple constraints.
pub fn constraint(rng: &mut Rng8, pool: &[Path]) -> Constraint {
    let n = rng.gen_range(0..=4);
    Constraint::sum((0..n).map(|_| simple_constraint(rng, pool)))
}

/// A constraint the input syntactically implies: a subset of its parts, each
/// possibly weakened.
pub fn weaken(rng: &mut Rng8, c: &Constraint) -> Constraint {
    let weaken_leaf = |rng: &mut Rng8, a: &LeafAtom| match a {
        LeafAtom::DimAtLeast { axis, size } | LeafAtom::DimEquals { axis, size } if rng.gen_bool(0.5) => {
            LeafAtom::DimAtLeast {
                axis: *axis,
                size: rng.gen_range(0..=*size),
            }
        }
        other => other.clone(),
    };
    let mut kept = Vec::new();
    for p in c.parts() {
        if !rng.gen_bool(0.6) {
            continue;
        }
        kept.push(match p {
            Constraint::Inherit(a) => Constraint::inherit(weaken_leaf(rng, a)),
            Constraint::NonInherit(treetensor::Atom::Leaf(a)) if rng.gen_bool(0.5) => {
                Constraint::inherit(weaken_leaf(rng, a))
            }
            other => other.clone(),
        });
    }
    Constraint::sum(kept)
}

/// Small nodes drawn from a narrow pool of dtypes, shapes and devices.
pub fn constraint_node(rng: &mut Rng8) -> Node {
    let leaf = |rng: &mut Rng8| {
        let ndim = rng.gen_range(1..=2);
        let shape: Vec<usize> = (0..ndim).map(|_| rng.gen_range(2..=3)).collect();
        let dtype = *[DType::F32, DType::F64].choose(rng).unwrap();
        let l = TensorLeaf::zeros(&shape, dtype);
        if rng.gen_bool(0.2) {
            l.with_device(Device::new("cuda:0"))
        } else {
            l
        }
    };
    if rng.gen_bool(0.3) {
        return Node::Value(leaf(rng));
    }
    let cfg = TreeCfg {
        max_depth: 2,
        max_leaves: 6,
        ..TreeCfg::default()
    };
    let sk = skeleton(rng, &cfg);
    sk.try_map::<_, ()>(&mut |_, _| Ok(leaf(rng))).unwrap()
}

/// Shape of an outer container with items at the bottom; never empty.
pub fn container(rng: &mut Rng8, depth: usize) -> Structure<()> {
    if depth >= 2 || rng.gen_bool(0.3) {
        return Structure::Item(());
    }
    if rng.gen_bool(0.5) {
        Structure::Seq((0..rng.gen_range(1..=3)).map(|_| container(rng, depth + 1)).collect())
    } else {
        let n = rng.gen_range(1..=3);
        Structure::Map(
            ["p", "q", "r"]
                .choose_multiple(rng, n)
                .map(|k| (k.to_string(), container(rng, depth + 1)))
                .collect(),
        )
    }
}
