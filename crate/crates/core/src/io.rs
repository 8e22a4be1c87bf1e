//! Text documents for trees, constraint specs, padded groups and structures.
//!
//! Documents are JSON. Object keys are written in ascending order and without
//! insignificant whitespace, so equal values always produce identical bytes.
//!
//! A value node is written as
//! `{"__leaf__":true,"data":[..],"device":"cpu","dtype":"f64","shape":[..]}`
//! with `data` in row-major order. Floats use the shortest decimal text that
//! reads back to the same value; non-finite floats are the strings `"nan"`,
//! `"inf"` and `"-inf"`. When reading, a bare number, bool or rectangular
//! array also denotes a value node: integers become i64, other numbers f64.
//!
//! An object without `"__leaf__": true` is always a tree node, even when its
//! children happen to be called `shape`, `dtype` and `data`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde_json::{Map, Number, Value};

use crate::constraint::{Atom, Constraint, ConstraintTree, LeafAtom, NodeAtom};
use crate::func::{OuterStructure, StructTree, Structure};
use crate::leaf::{Device, LeafError, TensorLeaf};
use crate::padding::PaddedGroup;
use crate::scalar::{DType, Element, Scalar};
use crate::tree::{Children, Key, Node, Path, TreeTensor};

pub const LEAF_MARKER: &str = "__leaf__";
pub const CONSTRAINTS_KEY: &str = "__constraints__";
pub const STRUCT_MARKER: &str = "__struct__";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("at {at}: {message}")]
    Format { at: String, message: String },
    #[error("at {at}: unknown dtype `{name}`")]
    DtypeUnknown { at: String, name: String },
    #[error("at {at}: shape holds {expected} elements but data has {actual}")]
    ShapeDataMismatch { at: String, expected: usize, actual: usize },
    #[error("at {at}: unknown atom kind `{kind}`")]
    UnknownAtomKind { at: String, kind: String },
    #[error("at {at}: bad path `{path}`: {reason}")]
    BadPath { at: String, path: String, reason: String },
}

fn format_err(at: &str, message: impl Into<String>) -> IoError {
    IoError::Format {
        at: at.to_string(),
        message: message.into(),
    }
}

fn location(path: &[Key]) -> String {
    Path::from(path).to_string()
}

/// Parses JSON text, mapping syntax errors to line and column.
pub fn parse_value(text: &str) -> Result<Value, IoError> {
    serde_json::from_str(text).map_err(|e| {
        // serde_json appends its own location; keep only the reason.
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        IoError::Syntax {
            line: e.line(),
            column: e.column(),
            message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })
}

/// Canonical text of a document value.
pub fn to_text(v: &Value) -> String {
    serde_json::to_string(v).expect("values always serialize")
}

fn float_value(x: f64, f32_text: Option<f32>) -> Value {
    if x.is_nan() {
        return Value::String("nan".into());
    }
    if x.is_infinite() {
        return Value::String(if x > 0.0 { "inf" } else { "-inf" }.into());
    }
    let mut buf = ryu::Buffer::new();
    let text = match f32_text {
        Some(v) => buf.format_finite(v),
        None => buf.format_finite(x),
    };
    Value::Number(Number::from_str(text).expect("shortest float text is valid JSON"))
}

fn element_values<T: Element>(data: &[T]) -> Vec<Value> {
    data.iter()
        .map(|&x| match x.to_scalar() {
            Scalar::F32(v) => float_value(v as f64, Some(v)),
            Scalar::F64(v) => float_value(v, None),
            Scalar::I64(v) => Value::Number(v.into()),
            Scalar::Bool(v) => Value::Bool(v),
        })
        .collect()
}

pub fn leaf_to_value(leaf: &TensorLeaf) -> Value {
    let data = match leaf.dtype() {
        DType::F32 => element_values(leaf.as_array::<f32>().expect("dtype").data()),
        DType::F64 => element_values(leaf.as_array::<f64>().expect("dtype").data()),
        DType::I64 => element_values(leaf.as_array::<i64>().expect("dtype").data()),
        DType::Bool => element_values(leaf.as_array::<bool>().expect("dtype").data()),
    };
    let mut m = Map::new();
    m.insert(LEAF_MARKER.into(), Value::Bool(true));
    m.insert("shape".into(), leaf.shape().iter().map(|&d| Value::from(d)).collect());
    m.insert("dtype".into(), Value::from(leaf.dtype().name()));
    m.insert("data".into(), Value::Array(data));
    m.insert("device".into(), Value::from(leaf.device().as_str()));
    Value::Object(m)
}

fn parse_float<T: FromStr>(v: &Value, at: &str) -> Result<T, IoError> {
    let text = match v {
        Value::Number(n) => n.as_str(),
        Value::String(s) if matches!(s.as_str(), "nan" | "inf" | "-inf") => s.as_str(),
        _ => return Err(format_err(at, format!("expected a float, found {v}"))),
    };
    text.parse().map_err(|_| format_err(at, format!("`{text}` is not a float")))
}

fn parse_elements<'a, T: Element>(
    items: impl IntoIterator<Item = &'a Value>,
    at: &str,
    read: impl Fn(&Value, &str) -> Result<T, IoError>,
) -> Result<Vec<T>, IoError> {
    items.into_iter().map(|v| read(v, at)).collect()
}

fn parse_i64(v: &Value, at: &str) -> Result<i64, IoError> {
    match v {
        Value::Number(n) => n
            .as_str()
            .parse()
            .map_err(|_| format_err(at, format!("`{n}` is not an i64"))),
        _ => Err(format_err(at, format!("expected an integer, found {v}"))),
    }
}

fn parse_bool(v: &Value, at: &str) -> Result<bool, IoError> {
    v.as_bool().ok_or_else(|| format_err(at, format!("expected a bool, found {v}")))
}

fn parse_usize(v: &Value, at: &str, what: &str) -> Result<usize, IoError> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| format_err(at, format!("`{what}` must be a non-negative integer, found {v}")))
}

fn field<'a>(m: &'a Map<String, Value>, name: &str, at: &str) -> Result<&'a Value, IoError> {
    m.get(name).ok_or_else(|| format_err(at, format!("missing field `{name}`")))
}

fn leaf_from_object(m: &Map<String, Value>, at: &str) -> Result<TensorLeaf, IoError> {
    for k in m.keys() {
        if !matches!(k.as_str(), LEAF_MARKER | "shape" | "dtype" | "data" | "device") {
            return Err(format_err(at, format!("unexpected leaf field `{k}`")));
        }
    }
    if m.get(LEAF_MARKER) != Some(&Value::Bool(true)) {
        return Err(format_err(at, format!("`{LEAF_MARKER}` must be true")));
    }
    let shape = field(m, "shape", at)?
        .as_array()
        .ok_or_else(|| format_err(at, "`shape` must be an array"))?
        .iter()
        .map(|d| parse_usize(d, at, "shape"))
        .collect::<Result<Vec<_>, _>>()?;
    let dtype_name = field(m, "dtype", at)?
        .as_str()
        .ok_or_else(|| format_err(at, "`dtype` must be a string"))?;
    let dtype: DType = dtype_name.parse().map_err(|_| IoError::DtypeUnknown {
        at: at.to_string(),
        name: dtype_name.to_string(),
    })?;
    let data = field(m, "data", at)?
        .as_array()
        .ok_or_else(|| format_err(at, "`data` must be an array"))?;
    let device = match m.get("device") {
        None => Device::CPU,
        Some(Value::String(s)) => Device::new(s.clone()),
        Some(_) => return Err(format_err(at, "`device` must be a string")),
    };
    let leaf = match dtype {
        DType::F32 => TensorLeaf::new(&shape, parse_elements(data, at, parse_float::<f32>)?),
        DType::F64 => TensorLeaf::new(&shape, parse_elements(data, at, parse_float::<f64>)?),
        DType::I64 => TensorLeaf::new(&shape, parse_elements(data, at, parse_i64)?),
        DType::Bool => TensorLeaf::new(&shape, parse_elements(data, at, parse_bool)?),
    };
    leaf.map(|l| l.with_device(device)).map_err(|e| match e {
        LeafError::ShapeDataMismatch { expected, actual } => IoError::ShapeDataMismatch {
            at: at.to_string(),
            expected,
            actual,
        },
        other => format_err(at, other.to_string()),
    })
}

fn is_integer_text(n: &Number) -> bool {
    !n.as_str().contains(['.', 'e', 'E'])
}

/// Reads a bare number, bool or rectangular array as a leaf.
fn leaf_from_shorthand(v: &Value, at: &str) -> Result<TensorLeaf, IoError> {
    let mut shape = Vec::new();
    let mut probe = v;
    while let Value::Array(items) = probe {
        shape.push(items.len());
        match items.first() {
            Some(first) => probe = first,
            None => break,
        }
    }
    let mut flat = Vec::new();
    fn collect<'a>(v: &'a Value, depth: usize, shape: &[usize], out: &mut Vec<&'a Value>, at: &str) -> Result<(), IoError> {
        match v {
            Value::Array(items) => {
                if depth >= shape.len() || items.len() != shape[depth] {
                    return Err(format_err(at, "array is not rectangular"));
                }
                items.iter().try_for_each(|x| collect(x, depth + 1, shape, out, at))
            }
            _ if depth != shape.len() => Err(format_err(at, "array is not rectangular")),
            Value::Number(_) | Value::Bool(_) => {
                out.push(v);
                Ok(())
            }
            _ => Err(format_err(at, format!("{v} is not a leaf value"))),
        }
    }
    collect(v, 0, &shape, &mut flat, at)?;
    let leaf = if !flat.is_empty() && flat.iter().all(|x| x.is_boolean()) {
        TensorLeaf::new(&shape, parse_elements(flat, at, parse_bool)?)
    } else if flat.iter().any(|x| x.is_boolean()) {
        return Err(format_err(at, "array mixes bools and numbers"));
    } else if !flat.is_empty() && flat.iter().all(|x| matches!(x, Value::Number(n) if is_integer_text(n))) {
        TensorLeaf::new(&shape, parse_elements(flat, at, parse_i64)?)
    } else {
        TensorLeaf::new(&shape, parse_elements(flat, at, parse_float::<f64>)?)
    };
    Ok(leaf.expect("shape derived from data"))
}

pub fn leaf_from_value(v: &Value, at: &str) -> Result<TensorLeaf, IoError> {
    match v {
        Value::Object(m) => leaf_from_object(m, at),
        _ => leaf_from_shorthand(v, at),
    }
}

fn node_to_value<L>(node: &Node<L>, leaf: &impl Fn(&L) -> Value) -> Value {
    match node {
        Node::Value(l) => leaf(l),
        Node::Tree(ch) => Value::Object(ch.iter().map(|(k, c)| (k.as_str().to_string(), node_to_value(c, leaf))).collect()),
    }
}

/// Reads an object as a tree node; `leaf` decides which values are leaves by
/// returning `Some`.
fn node_from_object<L>(
    m: &Map<String, Value>,
    path: &mut Vec<Key>,
    leaf: &impl Fn(&Value, &str) -> Option<Result<L, IoError>>,
    skip: Option<&str>,
) -> Result<Node<L>, IoError> {
    let mut children: Children<L> = Children::new();
    for (k, v) in m {
        if Some(k.as_str()) == skip {
            continue;
        }
        let key = Key::new(k).map_err(|e| format_err(&location(path), e.to_string()))?;
        path.push(key.clone());
        let at = location(path);
        let child = match leaf(v, &at) {
            Some(l) => l.map(Node::Value),
            None => match v {
                Value::Object(inner) => node_from_object(inner, path, leaf, None),
                _ => Err(format_err(&at, format!("{v} is neither a leaf nor a tree node"))),
            },
        };
        path.pop();
        children.insert(key, std::sync::Arc::new(child?));
    }
    Ok(Node::Tree(children))
}

fn tensor_leaf_reader(v: &Value, at: &str) -> Option<Result<TensorLeaf, IoError>> {
    match v {
        Value::Object(m) if !m.contains_key(LEAF_MARKER) => None,
        _ => Some(leaf_from_value(v, at)),
    }
}

pub fn tree_to_value(t: &TreeTensor) -> Value {
    let mut v = node_to_value(t.root(), &leaf_to_value);
    if !t.constraints().is_trivial() {
        let m = v.as_object_mut().expect("root is an object");
        m.insert(CONSTRAINTS_KEY.into(), placements_to_value(&t.constraints().placements()));
    }
    v
}

/// Reads a tree document. Embedded constraints are distributed but not
/// validated; call [`TreeTensor::validate_full`] on the result.
pub fn tree_from_value(v: &Value) -> Result<TreeTensor, IoError> {
    let m = v.as_object().ok_or_else(|| format_err("/", "a tree document must be an object"))?;
    if m.contains_key(LEAF_MARKER) {
        return Err(format_err("/", "the root must be a tree node"));
    }
    let root = node_from_object(m, &mut Vec::new(), &tensor_leaf_reader, Some(CONSTRAINTS_KEY))?;
    let t = TreeTensor::from_node(root).expect("object root");
    match m.get(CONSTRAINTS_KEY) {
        None => Ok(t),
        Some(spec) => {
            let placements = placements_from_value(spec)?;
            let ct = ConstraintTree::build(t.root(), &placements).map_err(|p| IoError::BadPath {
                at: CONSTRAINTS_KEY.into(),
                path: p.to_string(),
                reason: "no such node".into(),
            })?;
            Ok(TreeTensor::from_parts_unchecked(t.root().clone(), ct))
        }
    }
}

pub fn serialize_tree(t: &TreeTensor) -> String {
    to_text(&tree_to_value(t))
}

pub fn parse_tree(text: &str) -> Result<TreeTensor, IoError> {
    tree_from_value(&parse_value(text)?)
}

fn atom_to_value(atom: &Atom) -> Value {
    let paths = |ps: &[Path]| Value::Array(ps.iter().map(|p| Value::from(p.to_string())).collect());
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    match atom {
        Atom::Leaf(LeafAtom::DtypeIs(d)) => {
            put("kind", "dtype".into());
            put("value", d.name().into());
        }
        Atom::Leaf(LeafAtom::NdimIs(n)) => {
            put("kind", "ndim".into());
            put("value", (*n).into());
        }
        Atom::Leaf(LeafAtom::DimEquals { axis, size }) => {
            put("kind", "dim_equals".into());
            put("axis", (*axis).into());
            put("value", (*size).into());
        }
        Atom::Leaf(LeafAtom::DimAtLeast { axis, size }) => {
            put("kind", "dim_at_least".into());
            put("axis", (*axis).into());
            put("value", (*size).into());
        }
        Atom::Leaf(LeafAtom::DeviceIs(d)) => {
            put("kind", "device".into());
            put("value", d.as_str().into());
        }
        Atom::Node(NodeAtom::LeafCountIs(n)) => {
            put("kind", "leaf_count".into());
            put("value", (*n).into());
        }
        Atom::Node(NodeAtom::ShapesEqual(ps)) => {
            put("kind", "shapes_equal".into());
            put("paths", paths(ps));
        }
        Atom::Node(NodeAtom::SharedPrefix { paths: ps, len }) => {
            put("kind", "shared_prefix".into());
            put("paths", paths(ps));
            put("value", (*len).into());
        }
    }
    Value::Object(m)
}

const ATOM_KINDS: [&str; 8] = [
    "dtype",
    "ndim",
    "dim_equals",
    "dim_at_least",
    "device",
    "leaf_count",
    "shapes_equal",
    "shared_prefix",
];

fn parse_path(text: &str, at: &str) -> Result<Path, IoError> {
    Path::parse(text).map_err(|e| IoError::BadPath {
        at: at.to_string(),
        path: text.to_string(),
        reason: e.to_string(),
    })
}

fn atom_from_value(v: &Value, at: &str) -> Result<Atom, IoError> {
    let m = v.as_object().ok_or_else(|| format_err(at, "an atom must be an object"))?;
    let kind = field(m, "kind", at)?
        .as_str()
        .ok_or_else(|| format_err(at, "`kind` must be a string"))?;
    if !ATOM_KINDS.contains(&kind) {
        return Err(IoError::UnknownAtomKind {
            at: at.to_string(),
            kind: kind.to_string(),
        });
    }
    let allowed: &[&str] = match kind {
        "dim_equals" | "dim_at_least" => &["kind", "axis", "value"],
        "shapes_equal" => &["kind", "paths"],
        "shared_prefix" => &["kind", "paths", "value"],
        _ => &["kind", "value"],
    };
    if let Some(extra) = m.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(format_err(at, format!("unexpected field `{extra}` for atom `{kind}`")));
    }
    let num = |name: &str| parse_usize(field(m, name, at)?, at, name);
    let text = |name: &str| {
        field(m, name, at)?
            .as_str()
            .ok_or_else(|| format_err(at, format!("`{name}` must be a string")))
    };
    let paths = || -> Result<Vec<Path>, IoError> {
        field(m, "paths", at)?
            .as_array()
            .ok_or_else(|| format_err(at, "`paths` must be an array"))?
            .iter()
            .map(|p| {
                p.as_str()
                    .ok_or_else(|| format_err(at, "paths must be strings"))
                    .and_then(|s| parse_path(s, at))
            })
            .collect()
    };
    Ok(match kind {
        "dtype" => {
            let name = text("value")?;
            let d = name.parse().map_err(|_| IoError::DtypeUnknown {
                at: at.to_string(),
                name: name.to_string(),
            })?;
            Atom::Leaf(LeafAtom::DtypeIs(d))
        }
        "ndim" => Atom::Leaf(LeafAtom::NdimIs(num("value")?)),
        "dim_equals" => Atom::Leaf(LeafAtom::DimEquals {
            axis: num("axis")?,
            size: num("value")?,
        }),
        "dim_at_least" => Atom::Leaf(LeafAtom::DimAtLeast {
            axis: num("axis")?,
            size: num("value")?,
        }),
        "device" => Atom::Leaf(LeafAtom::DeviceIs(Device::new(text("value")?))),
        "leaf_count" => Atom::Node(NodeAtom::LeafCountIs(num("value")?)),
        "shapes_equal" => Atom::Node(NodeAtom::shapes_equal(paths()?)),
        "shared_prefix" => Atom::Node(NodeAtom::shared_prefix(paths()?, num("value")?)),
        _ => unreachable!("kind checked above"),
    })
}

/// Writes placements as a spec array. A constraint mixing inherited and
/// pinned parts becomes two entries for the same path.
pub fn placements_to_value(placements: &BTreeMap<Path, Constraint>) -> Value {
    let mut entries = Vec::new();
    for (path, c) in placements {
        let mut inherit = Vec::new();
        let mut pinned = Vec::new();
        for part in c.parts() {
            match part {
                Constraint::Inherit(a) => inherit.push(atom_to_value(&Atom::Leaf(a.clone()))),
                Constraint::NonInherit(a) => pinned.push(atom_to_value(a)),
                Constraint::Empty | Constraint::Sum(_) => unreachable!("parts are simple"),
            }
        }
        for (flag, atoms) in [(true, inherit), (false, pinned)] {
            if atoms.is_empty() {
                continue;
            }
            let mut m = Map::new();
            m.insert("path".into(), Value::from(path.to_string()));
            m.insert("inherit".into(), Value::Bool(flag));
            m.insert("atoms".into(), Value::Array(atoms));
            entries.push(Value::Object(m));
        }
    }
    Value::Array(entries)
}

/// Reads a spec array. Entries for the same path are summed.
pub fn placements_from_value(v: &Value) -> Result<BTreeMap<Path, Constraint>, IoError> {
    let entries = v
        .as_array()
        .ok_or_else(|| format_err("spec", "a constraint spec must be an array of entries"))?;
    let mut out: BTreeMap<Path, Constraint> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let at = format!("entry {i}");
        let m = e.as_object().ok_or_else(|| format_err(&at, "an entry must be an object"))?;
        if let Some(extra) = m.keys().find(|k| !matches!(k.as_str(), "path" | "inherit" | "atoms")) {
            return Err(format_err(&at, format!("unexpected field `{extra}`")));
        }
        let path_text = field(m, "path", &at)?
            .as_str()
            .ok_or_else(|| format_err(&at, "`path` must be a string"))?;
        let path = parse_path(path_text, &at)?;
        let inherit = field(m, "inherit", &at)?
            .as_bool()
            .ok_or_else(|| format_err(&at, "`inherit` must be a bool"))?;
        let atoms = field(m, "atoms", &at)?
            .as_array()
            .ok_or_else(|| format_err(&at, "`atoms` must be an array"))?;
        let mut parts = Vec::with_capacity(atoms.len());
        for (j, a) in atoms.iter().enumerate() {
            let at = format!("entry {i}, atom {j}");
            parts.push(match (atom_from_value(a, &at)?, inherit) {
                (Atom::Leaf(a), true) => Constraint::Inherit(a),
                (Atom::Node(_), true) => {
                    return Err(format_err(&at, "node atoms cannot be inherited; set `inherit` to false"))
                }
                (a, false) => Constraint::NonInherit(a),
            });
        }
        let c = Constraint::sum(parts);
        if !c.is_empty() {
            let merged = out.get(&path).map_or_else(|| c.clone(), |prev| prev.plus(&c));
            out.insert(path, merged);
        }
    }
    Ok(out)
}

pub fn parse_constraint_spec(text: &str) -> Result<BTreeMap<Path, Constraint>, IoError> {
    placements_from_value(&parse_value(text)?)
}

pub fn serialize_constraint_spec(placements: &BTreeMap<Path, Constraint>) -> String {
    to_text(&placements_to_value(placements))
}

pub fn padded_to_value(g: &PaddedGroup) -> Value {
    let mut m = Map::new();
    m.insert("batch".into(), Value::from(g.batch));
    m.insert("fill".into(), leaf_to_value(&TensorLeaf::from_scalar(g.fill)));
    m.insert("lengths".into(), tree_to_value(&g.lengths));
    m.insert("stacked".into(), tree_to_value(&g.stacked));
    Value::Object(m)
}

pub fn padded_from_value(v: &Value) -> Result<PaddedGroup, IoError> {
    let at = "padded group";
    let m = v.as_object().ok_or_else(|| format_err(at, "must be an object"))?;
    let fill = leaf_from_value(field(m, "fill", at)?, "fill")?
        .scalar_value()
        .ok_or_else(|| format_err("fill", "must be a scalar"))?;
    Ok(PaddedGroup {
        stacked: tree_from_value(field(m, "stacked", at)?)?,
        lengths: tree_from_value(field(m, "lengths", at)?)?,
        fill,
        batch: parse_usize(field(m, "batch", at)?, at, "batch")?,
    })
}

fn structure_to_value<T>(s: &Structure<T>, item_key: &str, item: &impl Fn(&T) -> Value) -> Value {
    let wrap = |k: &str, v: Value| Value::Object(Map::from_iter([(k.to_string(), v)]));
    match s {
        Structure::Seq(xs) => wrap("seq", xs.iter().map(|x| structure_to_value(x, item_key, item)).collect()),
        Structure::Map(m) => wrap(
            "map",
            Value::Object(m.iter().map(|(k, x)| (k.clone(), structure_to_value(x, item_key, item))).collect()),
        ),
        Structure::Item(t) => wrap(item_key, item(t)),
    }
}

fn structure_from_value<T>(
    v: &Value,
    at: &str,
    item_key: &str,
    item: &impl Fn(&Value, &str) -> Result<T, IoError>,
) -> Result<Structure<T>, IoError> {
    let single = v.as_object().filter(|m| m.len() == 1).and_then(|m| m.iter().next());
    let Some((k, inner)) = single else {
        return Err(format_err(at, format!("expected {{\"seq\": ..}}, {{\"map\": ..}} or {{\"{item_key}\": ..}}")));
    };
    match k.as_str() {
        "seq" => inner
            .as_array()
            .ok_or_else(|| format_err(at, "`seq` must be an array"))?
            .iter()
            .enumerate()
            .map(|(i, x)| structure_from_value(x, &format!("{at}[{i}]"), item_key, item))
            .collect::<Result<_, _>>()
            .map(Structure::Seq),
        "map" => inner
            .as_object()
            .ok_or_else(|| format_err(at, "`map` must be an object"))?
            .iter()
            .map(|(name, x)| Ok((name.clone(), structure_from_value(x, &format!("{at}.{name}"), item_key, item)?)))
            .collect::<Result<_, _>>()
            .map(Structure::Map),
        k if k == item_key => item(inner, at).map(Structure::Item),
        other => Err(format_err(at, format!("unknown structure tag `{other}`"))),
    }
}

pub fn outer_to_value(s: &OuterStructure) -> Value {
    structure_to_value(s, "tree", &tree_to_value)
}

pub fn outer_from_value(v: &Value) -> Result<OuterStructure, IoError> {
    structure_from_value(v, "outer", "tree", &|x, _| tree_from_value(x))
}

/// A tree of structures; every leaf is `{"__struct__": ..}` whose items are
/// `{"item": <leaf>}`.
pub fn struct_tree_to_value(t: &StructTree) -> Value {
    node_to_value(t, &|s: &Structure<TensorLeaf>| {
        Value::Object(Map::from_iter([(STRUCT_MARKER.to_string(), structure_to_value(s, "item", &leaf_to_value))]))
    })
}

pub fn struct_tree_from_value(v: &Value) -> Result<StructTree, IoError> {
    let m = v.as_object().ok_or_else(|| format_err("/", "a tree document must be an object"))?;
    let reader = |v: &Value, at: &str| -> Option<Result<Structure<TensorLeaf>, IoError>> {
        let m = v.as_object()?;
        let inner = m.get(STRUCT_MARKER)?;
        if m.len() != 1 {
            return Some(Err(format_err(at, format!("`{STRUCT_MARKER}` must be the only field"))));
        }
        Some(structure_from_value(inner, at, "item", &leaf_from_value))
    };
    node_from_object(m, &mut Vec::new(), &reader, None)
}
