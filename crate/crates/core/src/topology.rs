//! Binary gating-tree shapes.
//!
//! A [`Shape`] is an ordered full binary tree. A [`TreeTopology`] is the
//! canonical representative of a shape's mirror-equivalence class together
//! with the index structures used by the model: gates are numbered in
//! pre-order, experts left to right, and the experts below any node form a
//! contiguous index range.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{HmeError, Result};

/// Largest expert count accepted by [`enumerate_topologies`].
pub const DEFAULT_MAX_ENUMERATED_EXPERTS: usize = 8;

/// Which way a gate sends a point. `Left` is the branch taken when `z = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub gate: usize,
    pub branch: Branch,
}

/// An ordered full binary tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Expert,
    Gate(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn gate(left: Shape, right: Shape) -> Shape {
        Shape::Gate(Box::new(left), Box::new(right))
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            Shape::Expert => 1,
            Shape::Gate(l, r) => l.num_leaves() + r.num_leaves(),
        }
    }

    /// Mirror-invariant representative: every gate's children are ordered by
    /// leaf count, then by their canonical string.
    pub fn canonicalize(&self) -> Shape {
        match self {
            Shape::Expert => Shape::Expert,
            Shape::Gate(l, r) => {
                let l = l.canonicalize();
                let r = r.canonicalize();
                if canonical_order(&l, &r) == Ordering::Greater {
                    Shape::gate(r, l)
                } else {
                    Shape::gate(l, r)
                }
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == self.canonicalize()
    }

    pub fn mirror(&self) -> Shape {
        match self {
            Shape::Expert => Shape::Expert,
            Shape::Gate(l, r) => Shape::gate(r.mirror(), l.mirror()),
        }
    }

    /// Compact string form, e.g. `(e,(e,e))`.
    pub fn code(&self) -> String {
        let mut out = String::new();
        self.write_code(&mut out);
        out
    }

    fn write_code(&self, out: &mut String) {
        match self {
            Shape::Expert => out.push('e'),
            Shape::Gate(l, r) => {
                out.push('(');
                l.write_code(out);
                out.push(',');
                r.write_code(out);
                out.push(')');
            }
        }
    }

    /// Parses the form produced by [`Shape::code`]. Whitespace is ignored.
    pub fn parse(code: &str) -> Result<Shape> {
        let chars: Vec<char> = code.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let shape = parse_shape(&chars, &mut pos)?;
        if pos != chars.len() {
            return Err(HmeError::Structural(format!(
                "trailing input at position {pos} in {code:?}"
            )));
        }
        Ok(shape)
    }

    /// A shape with `num_experts` leaves split as evenly as possible at every gate.
    pub fn balanced(num_experts: usize) -> Result<Shape> {
        match num_experts {
            0 => Err(HmeError::InvalidArgument("a tree needs at least one expert".into())),
            1 => Ok(Shape::Expert),
            m => Ok(Shape::gate(Shape::balanced(m / 2)?, Shape::balanced(m - m / 2)?)),
        }
    }
}

fn parse_shape(chars: &[char], pos: &mut usize) -> Result<Shape> {
    match chars.get(*pos) {
        Some('e') | Some('E') => {
            *pos += 1;
            Ok(Shape::Expert)
        }
        Some('(') => {
            *pos += 1;
            let left = parse_shape(chars, pos)?;
            expect(chars, pos, ',')?;
            let right = parse_shape(chars, pos)?;
            expect(chars, pos, ')')?;
            Ok(Shape::gate(left, right))
        }
        other => Err(HmeError::Structural(format!(
            "expected 'e' or '(' at position {}, found {:?}",
            *pos, other
        ))),
    }
}

fn expect(chars: &[char], pos: &mut usize, want: char) -> Result<()> {
    if chars.get(*pos) == Some(&want) {
        *pos += 1;
        Ok(())
    } else {
        Err(HmeError::Structural(format!(
            "gate must have exactly two children: expected {want:?} at position {}",
            *pos
        )))
    }
}

fn canonical_order(a: &Shape, b: &Shape) -> Ordering {
    a.num_leaves()
        .cmp(&b.num_leaves())
        .then_with(|| a.code().cmp(&b.code()))
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// Child reference of a gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Child {
    Gate(usize),
    Expert(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateNode {
    pub left: Child,
    pub right: Child,
    pub parent: Option<PathStep>,
}

/// Canonical binary HME tree with precomputed paths and subtree ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeTopology {
    shape: Shape,
    gates: Vec<GateNode>,
    num_experts: usize,
    paths: Vec<Vec<PathStep>>,
    gate_paths: Vec<Vec<PathStep>>,
    left_experts: Vec<Range<usize>>,
    right_experts: Vec<Range<usize>>,
}

impl TreeTopology {
    /// Builds the canonical topology of `shape`.
    pub fn new(shape: &Shape) -> TreeTopology {
        let shape = shape.canonicalize();
        let mut topo = TreeTopology {
            shape: shape.clone(),
            gates: Vec::new(),
            num_experts: 0,
            paths: Vec::new(),
            gate_paths: Vec::new(),
            left_experts: Vec::new(),
            right_experts: Vec::new(),
        };
        let mut path = Vec::new();
        topo.build(&shape, None, &mut path);
        topo
    }

    pub fn single_expert() -> TreeTopology {
        TreeTopology::new(&Shape::Expert)
    }

    pub fn balanced(num_experts: usize) -> Result<TreeTopology> {
        Ok(TreeTopology::new(&Shape::balanced(num_experts)?))
    }

    pub fn parse(code: &str) -> Result<TreeTopology> {
        Ok(TreeTopology::new(&Shape::parse(code)?))
    }

    // Returns the child reference and the expert range covered by `node`.
    fn build(
        &mut self,
        node: &Shape,
        parent: Option<PathStep>,
        path: &mut Vec<PathStep>,
    ) -> (Child, Range<usize>) {
        match node {
            Shape::Expert => {
                let id = self.num_experts;
                self.num_experts += 1;
                self.paths.push(path.clone());
                (Child::Expert(id), id..id + 1)
            }
            Shape::Gate(l, r) => {
                let id = self.gates.len();
                self.gates.push(GateNode {
                    left: Child::Expert(usize::MAX),
                    right: Child::Expert(usize::MAX),
                    parent,
                });
                self.gate_paths.push(path.clone());
                self.left_experts.push(0..0);
                self.right_experts.push(0..0);

                let left_step = PathStep { gate: id, branch: Branch::Left };
                path.push(left_step);
                let (left, lr) = self.build(l, Some(left_step), path);
                path.pop();

                let right_step = PathStep { gate: id, branch: Branch::Right };
                path.push(right_step);
                let (right, rr) = self.build(r, Some(right_step), path);
                path.pop();

                self.gates[id].left = left;
                self.gates[id].right = right;
                let covered = lr.start..rr.end;
                self.left_experts[id] = lr;
                self.right_experts[id] = rr;
                (Child::Gate(id), covered)
            }
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn code(&self) -> String {
        self.shape.code()
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn gates(&self) -> &[GateNode] {
        &self.gates
    }

    pub fn root(&self) -> Child {
        if self.gates.is_empty() {
            Child::Expert(0)
        } else {
            Child::Gate(0)
        }
    }

    /// Root-to-leaf path of `expert` (0-based).
    pub fn path_to_expert(&self, expert: usize) -> Result<&[PathStep]> {
        self.paths.get(expert).map(Vec::as_slice).ok_or_else(|| {
            HmeError::InvalidArgument(format!(
                "expert index {expert} out of range for a tree with {} experts",
                self.num_experts
            ))
        })
    }

    /// Unchecked variant used in hot loops.
    pub(crate) fn path(&self, expert: usize) -> &[PathStep] {
        &self.paths[expert]
    }

    /// Steps from the root down to (not including) `gate`.
    pub fn gate_path(&self, gate: usize) -> &[PathStep] {
        &self.gate_paths[gate]
    }

    /// Experts reachable through the left branch of `gate`.
    pub fn left_experts(&self, gate: usize) -> Range<usize> {
        self.left_experts[gate].clone()
    }

    pub fn right_experts(&self, gate: usize) -> Range<usize> {
        self.right_experts[gate].clone()
    }

    /// ∏ z̃_i along the path of `expert` for a full gate assignment `z`
    /// (`true` means `z_i = 1`).
    pub fn zeta_indicator(&self, z: &[bool], expert: usize) -> Result<bool> {
        if z.len() != self.num_gates() {
            return Err(HmeError::Dimension(format!(
                "gate assignment has {} entries, tree has {} gates",
                z.len(),
                self.num_gates()
            )));
        }
        Ok(self.path_to_expert(expert)?.iter().all(|step| match step.branch {
            Branch::Left => z[step.gate],
            Branch::Right => !z[step.gate],
        }))
    }

    /// Serializable nested form with 1-based expert labels.
    pub fn to_node(&self) -> TopologyNode {
        let mut next = 0;
        node_of(&self.shape, &mut next)
    }

    /// Inverse of [`TreeTopology::to_node`]. The tree must be in canonical
    /// form with experts labelled `1..=M` from left to right.
    pub fn from_node(node: &TopologyNode) -> Result<TreeTopology> {
        let mut labels = Vec::new();
        let shape = shape_of(node, &mut labels);
        if !shape.is_canonical() {
            return Err(HmeError::Structural(format!(
                "topology {} is not in canonical form (expected {})",
                shape.code(),
                shape.canonicalize().code()
            )));
        }
        for (pos, &label) in labels.iter().enumerate() {
            if label != pos + 1 {
                return Err(HmeError::Structural(format!(
                    "expert labels must run 1..={} left to right; found {label} at position {}",
                    labels.len(),
                    pos + 1
                )));
            }
        }
        Ok(TreeTopology::new(&shape))
    }
}

impl fmt::Display for TreeTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.shape.fmt(f)
    }
}

/// JSON-facing tree: `{"gate": {"left": .., "right": ..}}` or `{"expert": j}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyNode {
    Gate { left: Box<TopologyNode>, right: Box<TopologyNode> },
    Expert(usize),
}

fn node_of(shape: &Shape, next: &mut usize) -> TopologyNode {
    match shape {
        Shape::Expert => {
            *next += 1;
            TopologyNode::Expert(*next)
        }
        Shape::Gate(l, r) => {
            let left = Box::new(node_of(l, next));
            let right = Box::new(node_of(r, next));
            TopologyNode::Gate { left, right }
        }
    }
}

fn shape_of(node: &TopologyNode, labels: &mut Vec<usize>) -> Shape {
    match node {
        TopologyNode::Expert(j) => {
            labels.push(*j);
            Shape::Expert
        }
        TopologyNode::Gate { left, right } => {
            let l = shape_of(left, labels);
            let r = shape_of(right, labels);
            Shape::gate(l, r)
        }
    }
}

impl Serialize for TreeTopology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        self.to_node().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TreeTopology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let node = TopologyNode::deserialize(d)?;
        TreeTopology::from_node(&node).map_err(serde::de::Error::custom)
    }
}

/// All canonical shapes with `num_experts` leaves, one per mirror class.
pub fn enumerate_topologies(num_experts: usize) -> Result<Vec<TreeTopology>> {
    enumerate_topologies_with_limit(num_experts, DEFAULT_MAX_ENUMERATED_EXPERTS)
}

pub fn enumerate_topologies_with_limit(
    num_experts: usize,
    max_experts: usize,
) -> Result<Vec<TreeTopology>> {
    if num_experts == 0 || num_experts > max_experts {
        return Err(HmeError::InvalidArgument(format!(
            "number of experts must lie in 1..={max_experts}, got {num_experts}"
        )));
    }
    let mut table: Vec<Vec<Shape>> = vec![Vec::new(), vec![Shape::Expert]];
    for n in 2..=num_experts {
        let mut shapes = Vec::new();
        for k in 1..=n / 2 {
            let smaller = &table[k];
            let larger = &table[n - k];
            for (ia, a) in smaller.iter().enumerate() {
                for (ib, b) in larger.iter().enumerate() {
                    if k == n - k && ib < ia {
                        continue;
                    }
                    shapes.push(Shape::gate(a.clone(), b.clone()).canonicalize());
                }
            }
        }
        shapes.sort_by(|a, b| a.code().cmp(&b.code()));
        table.push(shapes);
    }
    Ok(table[num_experts].iter().map(TreeTopology::new).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn fig1() -> TreeTopology {
        TreeTopology::parse("(e,(e,e))").unwrap()
    }

    // Every ordered full binary tree with n leaves (Catalan many).
    fn all_ordered(n: usize) -> Vec<Shape> {
        if n == 1 {
            return vec![Shape::Expert];
        }
        let mut out = Vec::new();
        for k in 1..n {
            for l in all_ordered(k) {
                for r in all_ordered(n - k) {
                    out.push(Shape::gate(l.clone(), r));
                }
            }
        }
        out
    }

    fn brute_force_classes(n: usize) -> BTreeSet<String> {
        all_ordered(n).iter().map(|s| s.canonicalize().code()).collect()
    }

    #[test]
    fn enumeration_counts_match_brute_force() {
        let expected = [1, 1, 1, 2, 3, 6, 11, 23];
        for n in 1..=8 {
            let shapes = enumerate_topologies(n).unwrap();
            let codes: BTreeSet<String> = shapes.iter().map(|t| t.code()).collect();
            assert_eq!(codes.len(), shapes.len(), "duplicates for n = {n}");
            assert_eq!(codes, brute_force_classes(n), "n = {n}");
            assert_eq!(shapes.len(), expected[n - 1]);
        }
    }

    #[test]
    fn enumeration_rejects_out_of_range() {
        assert!(matches!(enumerate_topologies(0), Err(HmeError::InvalidArgument(_))));
        assert!(matches!(enumerate_topologies(9), Err(HmeError::InvalidArgument(_))));
        assert_eq!(enumerate_topologies_with_limit(9, 9).unwrap().len(), 46);
    }

    #[test]
    fn ordered_four_leaf_shapes_collapse_to_two() {
        let ordered = all_ordered(4);
        assert_eq!(ordered.len(), 5);
        assert_eq!(brute_force_classes(4).len(), 2);
    }

    #[test]
    fn mirror_images_share_canonical_form() {
        let a = Shape::parse("(e,(e,e))").unwrap();
        let b = Shape::parse("((e,e),e)").unwrap();
        assert_eq!(a.canonicalize(), b.canonicalize());
        assert_eq!(Shape::Expert.canonicalize(), Shape::Expert);
    }

    #[test]
    fn fig1_paths() {
        let t = fig1();
        assert_eq!(t.num_experts(), 3);
        assert_eq!(t.num_gates(), 2);
        assert_eq!(
            t.path_to_expert(0).unwrap(),
            &[PathStep { gate: 0, branch: Branch::Left }]
        );
        assert_eq!(
            t.path_to_expert(2).unwrap(),
            &[
                PathStep { gate: 0, branch: Branch::Right },
                PathStep { gate: 1, branch: Branch::Right }
            ]
        );
        assert!(t.path_to_expert(3).is_err());
        assert!(TreeTopology::single_expert().path_to_expert(0).unwrap().is_empty());
        assert_eq!(t.left_experts(0), 0..1);
        assert_eq!(t.right_experts(0), 1..3);
        assert_eq!(t.left_experts(1), 1..2);
    }

    #[test]
    fn zeta_examples() {
        let t = fig1();
        let zeta = |z: &[bool]| -> Vec<bool> {
            (0..3).map(|j| t.zeta_indicator(z, j).unwrap()).collect()
        };
        assert_eq!(zeta(&[true, false]), vec![true, false, false]);
        assert_eq!(zeta(&[false, false]), vec![false, false, true]);
        assert!(t.zeta_indicator(&[true], 0).is_err());
    }

    #[test]
    fn exactly_one_expert_per_assignment() {
        for m in 1..=5 {
            for topo in enumerate_topologies(m).unwrap() {
                let g = topo.num_gates();
                for bits in 0u32..(1 << g) {
                    let z: Vec<bool> = (0..g).map(|i| bits >> i & 1 == 1).collect();
                    let hits = (0..m).filter(|&j| topo.zeta_indicator(&z, j).unwrap()).count();
                    assert_eq!(hits, 1, "{topo} z = {z:?}");
                }
            }
        }
    }

    #[test]
    fn paths_have_leaf_depth_and_unique_gates() {
        for topo in enumerate_topologies(7).unwrap() {
            for j in 0..topo.num_experts() {
                let path = topo.path_to_expert(j).unwrap();
                let gates: BTreeSet<usize> = path.iter().map(|s| s.gate).collect();
                assert_eq!(gates.len(), path.len());
                assert_eq!(path[0].gate, 0);
            }
            assert_eq!(topo.num_gates() + 1, topo.num_experts());
        }
    }

    #[test]
    fn parse_errors_are_structural() {
        assert!(matches!(Shape::parse("(e)"), Err(HmeError::Structural(_))));
        assert!(matches!(Shape::parse("(e,e,e)"), Err(HmeError::Structural(_))));
        assert!(matches!(Shape::parse("e e"), Err(HmeError::Structural(_))));
    }

    #[test]
    fn node_form_round_trips_and_validates() {
        let t = fig1();
        let node = t.to_node();
        assert_eq!(TreeTopology::from_node(&node).unwrap(), t);
        let mirrored = TopologyNode::Gate {
            left: Box::new(TopologyNode::Gate {
                left: Box::new(TopologyNode::Expert(1)),
                right: Box::new(TopologyNode::Expert(2)),
            }),
            right: Box::new(TopologyNode::Expert(3)),
        };
        assert!(matches!(TreeTopology::from_node(&mirrored), Err(HmeError::Structural(_))));
        let relabelled = TopologyNode::Gate {
            left: Box::new(TopologyNode::Expert(2)),
            right: Box::new(TopologyNode::Expert(1)),
        };
        assert!(TreeTopology::from_node(&relabelled).is_err());
    }

    #[test]
    fn balanced_sixteen() {
        let t = TreeTopology::balanced(16).unwrap();
        assert_eq!(t.num_experts(), 16);
        assert!((0..16).all(|j| t.path_to_expert(j).unwrap().len() == 4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_shape() -> impl Strategy<Value = Shape> {
            let leaf = Just(Shape::Expert);
            leaf.prop_recursive(5, 24, 2, |inner| {
                (inner.clone(), inner).prop_map(|(l, r)| Shape::gate(l, r))
            })
        }

        proptest! {
            #[test]
            fn canonicalize_is_idempotent_and_mirror_invariant(s in arb_shape()) {
                let c = s.canonicalize();
                prop_assert_eq!(c.canonicalize(), c.clone());
                prop_assert_eq!(s.mirror().canonicalize(), c.clone());
                prop_assert_eq!(c.num_leaves(), s.num_leaves());
                prop_assert_eq!(Shape::parse(&c.code()).unwrap(), c);
            }
        }
    }
}
