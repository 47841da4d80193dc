//! Exact computational-topology oracle for the tree weights.
//!
//! Each region is modeled as a wedge of loops: one 0-cell per region and one
//! 1-cell per fiber inside it. The inclusion of a node's children into the
//! node collapses the child points and induces a chain map; the corank of the
//! induced map on first homology equals the number of fibers connecting
//! distinct children, which is exactly the tree weight of the node. All ranks
//! are computed by Gaussian elimination over exact rationals.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::atlas::{AtlasHierarchy, NodeId};
use crate::connectome::AdjacencyMatrix;
use crate::tree::build_tree;
use crate::ErrorKind;

#[derive(Debug, Error)]
pub enum HomologyError {
    #[error("node {0} is a leaf; complexes are built for internal nodes")]
    LeafParent(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("matrix has {matrix_p} ROIs but hierarchy has {hierarchy_p} leaves")]
    DimensionMismatch { matrix_p: usize, hierarchy_p: usize },
    #[error(
        "node {node} needs {cells} one-cells, over the oracle budget of {budget}; \
         the oracle is a verification tool, lower the counts or raise the budget"
    )]
    CellBudgetExceeded {
        node: NodeId,
        cells: u64,
        budget: u64,
    },
    #[error("one-cell `{label}` of the children complex has no image in the parent complex")]
    MissingImage { label: String },
    #[error("chain map fails to commute with the boundary on cell `{label}`")]
    NotAChainMap { label: String },
    #[error("homology dimension must be 0 or 1, got {0}")]
    BadDimension(u8),
}

impl HomologyError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            HomologyError::CellBudgetExceeded { .. } | HomologyError::NotAChainMap { .. } => {
                ErrorKind::Computation
            }
            _ => ErrorKind::Validation,
        }
    }
}

/// Sparse vector over exact rationals: sorted `(row, coefficient)` pairs with
/// nonzero coefficients.
type SparseVec = Vec<(usize, BigRational)>;

fn sparse_unit(row: usize) -> SparseVec {
    vec![(row, BigRational::one())]
}

/// `target += coeff * source`, keeping entries sorted and nonzero.
fn sparse_axpy(target: &SparseVec, coeff: &BigRational, source: &SparseVec) -> SparseVec {
    let mut out = Vec::with_capacity(target.len() + source.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < source.len() {
        match (target.get(i), source.get(j)) {
            (Some((ri, vi)), Some((rj, vj))) if ri == rj => {
                let v = vi + coeff * vj;
                if !v.is_zero() {
                    out.push((*ri, v));
                }
                i += 1;
                j += 1;
            }
            (Some((ri, vi)), Some((rj, _))) if ri < rj => {
                out.push((*ri, vi.clone()));
                i += 1;
            }
            (Some(_), Some((rj, vj))) => {
                out.push((*rj, coeff * vj));
                j += 1;
            }
            (Some((ri, vi)), None) => {
                out.push((*ri, vi.clone()));
                i += 1;
            }
            (None, Some((rj, vj))) => {
                out.push((*rj, coeff * vj));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Column-reduction over the rationals. Returns the rank and, when
/// `track_kernel`, a basis of the kernel: for every column that reduces to
/// zero, the combination of original columns that produced it.
fn reduce_columns(columns: &[SparseVec], track_kernel: bool) -> (usize, Vec<SparseVec>) {
    // pivot row -> (reduced column owning that pivot, its combination),
    // normalized so the pivot coefficient is 1.
    let mut pivots: HashMap<usize, (SparseVec, SparseVec)> = HashMap::new();
    let mut kernel = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mut work = col.clone();
        let mut combo = if track_kernel { sparse_unit(j) } else { Vec::new() };
        loop {
            let Some((pivot_row, value)) = work.last().cloned() else {
                if track_kernel {
                    kernel.push(combo);
                }
                break;
            };
            match pivots.get(&pivot_row) {
                Some((owner_col, owner_combo)) => {
                    let coeff = -value;
                    work = sparse_axpy(&work, &coeff, owner_col);
                    if track_kernel {
                        combo = sparse_axpy(&combo, &coeff, owner_combo);
                    }
                }
                None => {
                    let inv = value.recip();
                    let normalized: SparseVec =
                        work.iter().map(|(r, v)| (*r, v * &inv)).collect();
                    let normalized_combo: SparseVec =
                        combo.iter().map(|(r, v)| (*r, v * &inv)).collect();
                    pivots.insert(pivot_row, (normalized, normalized_combo));
                    break;
                }
            }
        }
    }
    (pivots.len(), kernel)
}

/// Rank of a set of sparse columns over the rationals.
fn rank_of_columns(columns: &[SparseVec]) -> usize {
    reduce_columns(columns, false).0
}

/// A 0/1-dimensional cell complex: labeled points and labeled segments or
/// loops between them. No 2-cells exist in this model.
#[derive(Debug, Clone)]
pub struct ChainComplex {
    zero_cells: Vec<String>,
    /// (label, start zero-cell index, end zero-cell index); loops have
    /// start == end.
    one_cells: Vec<(String, usize, usize)>,
}

impl ChainComplex {
    pub fn new(zero_cells: Vec<String>, one_cells: Vec<(String, usize, usize)>) -> Self {
        for (_, s, e) in &one_cells {
            assert!(*s < zero_cells.len() && *e < zero_cells.len());
        }
        Self {
            zero_cells,
            one_cells,
        }
    }

    pub fn zero_cells(&self) -> &[String] {
        &self.zero_cells
    }

    pub fn one_cells(&self) -> &[(String, usize, usize)] {
        &self.one_cells
    }

    /// Boundary matrix columns over the rationals: the column of a cell
    /// `s -> e` is `e - s`; loops give zero columns.
    pub fn boundary_columns(&self) -> Vec<SparseVec> {
        self.one_cells
            .iter()
            .map(|(_, s, e)| {
                if s == e {
                    Vec::new()
                } else {
                    let mut col = vec![
                        (*s, -BigRational::one()),
                        (*e, BigRational::one()),
                    ];
                    col.sort_by_key(|(r, _)| *r);
                    col
                }
            })
            .collect()
    }
}

/// A cell-to-cell chain map between two complexes, validated to commute with
/// the boundary operators.
#[derive(Debug, Clone)]
pub struct ChainMap<'a> {
    domain: &'a ChainComplex,
    codomain: &'a ChainComplex,
    /// Image zero-cell index for each domain zero-cell.
    map_zero: Vec<usize>,
    /// Image one-cell index for each domain one-cell.
    map_one: Vec<usize>,
}

impl<'a> ChainMap<'a> {
    /// Build a chain map from cell assignments and verify the chain-map law
    /// `boundary ∘ F = F ∘ boundary` cell by cell, exactly.
    pub fn new(
        domain: &'a ChainComplex,
        codomain: &'a ChainComplex,
        map_zero: Vec<usize>,
        map_one: Vec<usize>,
    ) -> Result<Self, HomologyError> {
        assert_eq!(map_zero.len(), domain.zero_cells.len());
        assert_eq!(map_one.len(), domain.one_cells.len());
        let map = Self {
            domain,
            codomain,
            map_zero,
            map_one,
        };
        map.check_commutes()?;
        Ok(map)
    }

    fn check_commutes(&self) -> Result<(), HomologyError> {
        for (idx, (label, s, e)) in self.domain.one_cells.iter().enumerate() {
            let (_, fs, fe) = self.codomain.one_cells[self.map_one[idx]];
            // boundary(F(c)) as a chain over codomain zero-cells
            let mut lhs: HashMap<usize, i64> = HashMap::new();
            *lhs.entry(fe).or_insert(0) += 1;
            *lhs.entry(fs).or_insert(0) -= 1;
            // F(boundary(c))
            let mut rhs: HashMap<usize, i64> = HashMap::new();
            *rhs.entry(self.map_zero[*e]).or_insert(0) += 1;
            *rhs.entry(self.map_zero[*s]).or_insert(0) -= 1;
            lhs.retain(|_, v| *v != 0);
            rhs.retain(|_, v| *v != 0);
            if lhs != rhs {
                return Err(HomologyError::NotAChainMap {
                    label: label.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &ChainComplex {
        self.domain
    }

    pub fn codomain(&self) -> &ChainComplex {
        self.codomain
    }

    pub fn map_zero(&self) -> &[usize] {
        &self.map_zero
    }

    pub fn map_one(&self) -> &[usize] {
        &self.map_one
    }

    /// Apply the induced linear map on 1-chains to a sparse vector.
    fn apply_one(&self, chain: &SparseVec) -> SparseVec {
        let mut out: HashMap<usize, BigRational> = HashMap::new();
        for (cell, coeff) in chain {
            let image = self.map_one[*cell];
            let entry = out.entry(image).or_insert_with(BigRational::zero);
            *entry += coeff.clone();
        }
        let mut vec: SparseVec = out.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        vec.sort_by_key(|(r, _)| *r);
        vec
    }
}

/// Options for the oracle path.
#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Maximum number of 1-cells allowed in any single node's complex.
    pub cell_budget: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cell_budget: 100_000,
        }
    }
}

fn check_dims(h: &AtlasHierarchy, a: &AdjacencyMatrix) -> Result<(), HomologyError> {
    if a.p() != h.p() {
        return Err(HomologyError::DimensionMismatch {
            matrix_p: a.p(),
            hierarchy_p: h.p(),
        });
    }
    Ok(())
}

fn internal_children(
    h: &AtlasHierarchy,
    parent: NodeId,
) -> Result<Vec<NodeId>, HomologyError> {
    let children = h
        .children(parent)
        .map_err(|_| HomologyError::UnknownNode(parent))?;
    if children.is_empty() {
        return Err(HomologyError::LeafParent(parent));
    }
    Ok(children)
}

/// Count fibers (with multiplicity) inside a leaf set: unordered pairs
/// `a <= b` with both ends in the set, self-edges included.
fn fibers_within(a: &AdjacencyMatrix, rois: &[usize]) -> u64 {
    let mut total = 0;
    for (k, &i) in rois.iter().enumerate() {
        total += a.get(i, i);
        for &j in &rois[k + 1..] {
            total += a.get(i, j);
        }
    }
    total
}

/// Emit one labeled loop per fiber inside a leaf set, anchored at
/// `zero_cell`. Labels are shared between the children and parent complexes
/// so the induced map can match cells.
fn push_loops(
    a: &AdjacencyMatrix,
    rois: &[usize],
    zero_cell: usize,
    one_cells: &mut Vec<(String, usize, usize)>,
) {
    for (k, &i) in rois.iter().enumerate() {
        for copy in 0..a.get(i, i) {
            one_cells.push((format!("fiber:{i}:{i}:{copy}"), zero_cell, zero_cell));
        }
        for &j in &rois[k + 1..] {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            for copy in 0..a.get(lo, hi) {
                one_cells.push((format!("fiber:{lo}:{hi}:{copy}"), zero_cell, zero_cell));
            }
        }
    }
}

/// The disjoint union of the parent's children, each a wedge of loops: one
/// zero-cell per child, one loop per fiber strictly inside that child's leaf
/// set. Fibers connecting two distinct children live only in the parent
/// complex.
pub fn build_children_complex(
    h: &AtlasHierarchy,
    a: &AdjacencyMatrix,
    parent: NodeId,
    options: &OracleOptions,
) -> Result<ChainComplex, HomologyError> {
    check_dims(h, a)?;
    let children = internal_children(h, parent)?;
    let mut cells = 0u64;
    for &child in &children {
        let rois = h.descendant_rois(child).expect("child of valid node");
        cells += fibers_within(a, rois);
    }
    if cells > options.cell_budget {
        return Err(HomologyError::CellBudgetExceeded {
            node: parent,
            cells,
            budget: options.cell_budget,
        });
    }

    let mut zero_cells = Vec::with_capacity(children.len());
    let mut one_cells = Vec::new();
    for (idx, &child) in children.iter().enumerate() {
        zero_cells.push(h.node(child).expect("child node").name.clone());
        let rois = h.descendant_rois(child).expect("child of valid node");
        push_loops(a, rois, idx, &mut one_cells);
    }
    Ok(ChainComplex::new(zero_cells, one_cells))
}

/// The parent as a single wedge of loops: one zero-cell, one loop per fiber
/// anywhere inside the parent's full leaf set (child-internal fibers,
/// connecting fibers, and self-edges).
pub fn build_parent_complex(
    h: &AtlasHierarchy,
    a: &AdjacencyMatrix,
    parent: NodeId,
    options: &OracleOptions,
) -> Result<ChainComplex, HomologyError> {
    check_dims(h, a)?;
    internal_children(h, parent)?;
    let rois = h
        .descendant_rois(parent)
        .map_err(|_| HomologyError::UnknownNode(parent))?;
    let cells = fibers_within(a, rois);
    if cells > options.cell_budget {
        return Err(HomologyError::CellBudgetExceeded {
            node: parent,
            cells,
            budget: options.cell_budget,
        });
    }
    let name = h.node(parent).expect("internal node").name.clone();
    let mut one_cells = Vec::with_capacity(cells as usize);
    push_loops(a, rois, 0, &mut one_cells);
    Ok(ChainComplex::new(vec![name], one_cells))
}

/// The map induced by including the children into the parent: all zero-cells
/// collapse to the parent point and each child-internal loop goes to the
/// parent loop with the same label. The chain-map law is verified on
/// construction.
pub fn induced_map<'a>(
    children: &'a ChainComplex,
    parent: &'a ChainComplex,
) -> Result<ChainMap<'a>, HomologyError> {
    let mut parent_index: HashMap<&str, usize> = HashMap::new();
    for (idx, (label, _, _)) in parent.one_cells.iter().enumerate() {
        parent_index.insert(label.as_str(), idx);
    }
    let map_zero = vec![0; children.zero_cells.len()];
    let mut map_one = Vec::with_capacity(children.one_cells.len());
    for (label, _, _) in &children.one_cells {
        let image = parent_index
            .get(label.as_str())
            .ok_or_else(|| HomologyError::MissingImage {
                label: label.clone(),
            })?;
        map_one.push(*image);
    }
    ChainMap::new(children, parent, map_zero, map_one)
}

/// Rank of the p-th homology group of a complex with no 2-cells:
/// `rank H_0 = #zero-cells - rank(boundary)` and
/// `rank H_1 = #one-cells - rank(boundary)`.
pub fn homology_rank(complex: &ChainComplex, p: u8) -> Result<usize, HomologyError> {
    let boundary_rank = rank_of_columns(&complex.boundary_columns());
    match p {
        0 => Ok(complex.zero_cells.len() - boundary_rank),
        1 => Ok(complex.one_cells.len() - boundary_rank),
        other => Err(HomologyError::BadDimension(other)),
    }
}

/// A basis of the cycle space `ker(boundary)` in dimension one. With no
/// 2-cells this is exactly a basis of first homology.
fn cycle_basis(complex: &ChainComplex) -> Vec<SparseVec> {
    let (_, kernel) = reduce_columns(&complex.boundary_columns(), true);
    kernel
}

/// Corank of the induced map on first homology at an internal node:
/// `rank H_1(parent) - rank(image of H_1(children))`.
pub fn corank(
    h: &AtlasHierarchy,
    a: &AdjacencyMatrix,
    parent: NodeId,
    options: &OracleOptions,
) -> Result<u64, HomologyError> {
    let children = build_children_complex(h, a, parent, options)?;
    let parent_cx = build_parent_complex(h, a, parent, options)?;
    let map = induced_map(&children, &parent_cx)?;

    let parent_rank = homology_rank(&parent_cx, 1)?;
    let basis = cycle_basis(&children);
    let image_columns: Vec<SparseVec> = basis.iter().map(|v| map.apply_one(v)).collect();
    let image_rank = rank_of_columns(&image_columns);
    Ok((parent_rank - image_rank) as u64)
}

/// Per-node outcome of a theorem verification run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeVerdict {
    pub node_id: NodeId,
    pub node_name: String,
    pub weight: u64,
    pub corank: u64,
}

impl NodeVerdict {
    pub fn matches(&self) -> bool {
        self.weight == self.corank
    }
}

/// Full verification report; failures are reported per node, not thrown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremReport {
    pub verdicts: Vec<NodeVerdict>,
}

impl TheoremReport {
    pub fn all_match(&self) -> bool {
        self.verdicts.iter().all(NodeVerdict::matches)
    }

    /// Report CSV: `node_name,weight,corank,match`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_name,weight,corank,match\n");
        for v in &self.verdicts {
            out.push_str(&format!(
                "{},{},{},{}\n",
                v.node_name,
                v.weight,
                v.corank,
                v.matches()
            ));
        }
        out
    }
}

/// Check `corank(node) == tree weight(node)` for every internal node.
/// Per-node verifications are independent and run in parallel.
pub fn verify_theorem(
    h: &AtlasHierarchy,
    a: &AdjacencyMatrix,
    options: &OracleOptions,
) -> Result<TheoremReport, HomologyError> {
    check_dims(h, a)?;
    let tree = build_tree(h, a).map_err(|_| HomologyError::DimensionMismatch {
        matrix_p: a.p(),
        hierarchy_p: h.p(),
    })?;
    let verdicts = h
        .internal_nodes()
        .par_iter()
        .map(|&id| {
            let c = corank(h, a, id, options)?;
            Ok(NodeVerdict {
                node_id: id,
                node_name: h.node(id).expect("internal node").name.clone(),
                weight: tree.weight(h, id).expect("tree from same hierarchy"),
                corank: c,
            })
        })
        .collect::<Result<Vec<_>, HomologyError>>()?;
    Ok(TheoremReport { verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::AtlasHierarchy;
    use crate::connectome::AdjacencyMatrix;

    fn four_leaf() -> (AtlasHierarchy, AdjacencyMatrix) {
        let h = AtlasHierarchy::parse(
            "node_id,name,parent_id,level,roi_index\n\
             0,root,,1,\n\
             1,u,0,2,\n\
             2,v,0,2,\n\
             3,l0,1,3,0\n\
             4,l1,1,3,1\n\
             5,l2,2,3,2\n\
             6,l3,2,3,3\n",
        )
        .unwrap();
        let mut counts = vec![0u64; 16];
        let mut set = |i: usize, j: usize, v: u64| {
            counts[i * 4 + j] = v;
            counts[j * 4 + i] = v;
        };
        set(0, 1, 2);
        set(2, 3, 5);
        set(0, 2, 1);
        set(1, 3, 4);
        let a = AdjacencyMatrix::from_counts(
            "s",
            4,
            counts,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap();
        (h, a)
    }

    fn opts() -> OracleOptions {
        OracleOptions::default()
    }

    #[test]
    fn children_complex_of_singleton_children_has_no_loops() {
        let h = AtlasHierarchy::parse(
            "node_id,name,parent_id,level,roi_index\n\
             0,root,,1,\n\
             1,a,0,2,0\n\
             2,b,0,2,1\n\
             3,c,0,2,2\n",
        )
        .unwrap();
        let a = AdjacencyMatrix::from_counts(
            "s",
            3,
            vec![0, 1, 1, 1, 0, 1, 1, 1, 0],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let cx = build_children_complex(&h, &a, 0, &opts()).unwrap();
        assert_eq!(cx.zero_cells().len(), 3);
        assert_eq!(cx.one_cells().len(), 0);
    }

    #[test]
    fn children_complex_counts_loops_inside_children() {
        let (h, a) = four_leaf();
        let cx = build_children_complex(&h, &a, 0, &opts()).unwrap();
        // 2 loops inside u (counts[0][1]=2) and 5 inside v (counts[2][3]=5).
        assert_eq!(cx.zero_cells().len(), 2);
        assert_eq!(cx.one_cells().len(), 7);
        let at_u = cx
            .one_cells()
            .iter()
            .filter(|(_, s, e)| *s == 0 && *e == 0)
            .count();
        assert_eq!(at_u, 2);
    }

    #[test]
    fn parent_complex_counts_all_fibers_under_node() {
        let (h, a) = four_leaf();
        let root = build_parent_complex(&h, &a, 0, &opts()).unwrap();
        assert_eq!(root.zero_cells().len(), 1);
        assert_eq!(root.one_cells().len(), 12);
        let u = build_parent_complex(&h, &a, 1, &opts()).unwrap();
        assert_eq!(u.one_cells().len(), 2);
    }

    #[test]
    fn dk_temporal_lobe_children_loops_exclude_connecting_fibers() {
        let h = AtlasHierarchy::desikan_killiany();
        let p = h.p();
        let temporal = h.node_by_name("lh-temporal-lobe").unwrap().node_id;
        let roi = |name: &str| h.node_by_name(name).unwrap().roi_index.unwrap();
        let mut counts = vec![0u64; p * p];
        let mut set = |a: usize, b: usize, v: u64| {
            counts[a * p + b] = v;
            counts[b * p + a] = v;
        };
        // Inside the medial aspect, inside the lateral aspect, and between
        // the two aspects (the connecting fibers).
        set(roi("lh-entorhinal"), roi("lh-parahippocampal"), 3);
        set(roi("lh-middletemporal"), roi("lh-superiortemporal"), 2);
        set(roi("lh-bankssts"), roi("lh-inferiortemporal"), 1);
        set(roi("lh-entorhinal"), roi("lh-superiortemporal"), 5);
        set(roi("lh-fusiform"), roi("lh-bankssts"), 7);
        // A fiber far from the temporal lobe must not appear at all.
        set(roi("rh-cuneus"), roi("rh-lingual"), 9);
        let names = (0..p).map(|i| format!("r{i}")).collect();
        let a = AdjacencyMatrix::from_counts("s", p, counts, names).unwrap();

        let children = build_children_complex(h, &a, temporal, &opts()).unwrap();
        assert_eq!(children.one_cells().len(), 6); // 3 + 2 + 1, connecting excluded
        let parent = build_parent_complex(h, &a, temporal, &opts()).unwrap();
        assert_eq!(parent.one_cells().len(), 18); // 6 + 5 + 7
        assert_eq!(corank(h, &a, temporal, &opts()).unwrap(), 12);
        let tree = crate::tree::build_tree(h, &a).unwrap();
        assert_eq!(tree.weight(h, temporal).unwrap(), 12);
    }

    #[test]
    fn parent_complex_of_zero_matrix_is_a_point() {
        let (h, _) = four_leaf();
        let a = AdjacencyMatrix::from_counts(
            "s",
            4,
            vec![0; 16],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap();
        let cx = build_parent_complex(&h, &a, 0, &opts()).unwrap();
        assert_eq!(cx.zero_cells().len(), 1);
        assert_eq!(cx.one_cells().len(), 0);
    }

    #[test]
    fn induced_map_commutes_and_maps_loops_to_loops() {
        let (h, a) = four_leaf();
        let children = build_children_complex(&h, &a, 0, &opts()).unwrap();
        let parent = build_parent_complex(&h, &a, 0, &opts()).unwrap();
        let map = induced_map(&children, &parent).unwrap();
        for (idx, (_, s, e)) in children.one_cells().iter().enumerate() {
            assert_eq!(s, e, "children complexes contain loops only");
            let (_, fs, fe) = parent.one_cells()[map.map_one()[idx]];
            assert_eq!(fs, fe);
        }
    }

    #[test]
    fn empty_complexes_give_empty_map() {
        let children = ChainComplex::new(vec!["x".into()], vec![]);
        let parent = ChainComplex::new(vec!["y".into()], vec![]);
        let map = induced_map(&children, &parent).unwrap();
        assert!(map.map_one().is_empty());
    }

    #[test]
    fn hypothetical_connecting_path_maps_to_a_loop() {
        // A non-loop 1-cell between two child points collapses to a loop in
        // the parent; the chain-map law must still hold exactly.
        let children = ChainComplex::new(
            vec!["xj".into(), "xi".into()],
            vec![("path".into(), 0, 1)],
        );
        let parent = ChainComplex::new(vec!["xk".into()], vec![("path".into(), 0, 0)]);
        let map = induced_map(&children, &parent).unwrap();
        assert_eq!(map.map_one(), &[0]);
        // The domain has a nonzero boundary, the image does not; commutation
        // holds because both sides collapse to the same point.
        assert_eq!(homology_rank(&children, 1).unwrap(), 0);
        assert_eq!(homology_rank(&parent, 1).unwrap(), 1);
    }

    #[test]
    fn chain_map_law_violation_is_detected() {
        // Map a genuine segment to a segment with mismatched endpoints.
        let domain = ChainComplex::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![("s".into(), 0, 1)],
        );
        let codomain = ChainComplex::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![("s".into(), 0, 2)],
        );
        let err = ChainMap::new(&domain, &codomain, vec![0, 1, 2], vec![0]);
        assert!(matches!(err, Err(HomologyError::NotAChainMap { .. })));
    }

    #[test]
    fn wedge_of_loops_homology() {
        let m = 9;
        let cx = ChainComplex::new(
            vec!["x".into()],
            (0..m).map(|k| (format!("loop{k}"), 0, 0)).collect(),
        );
        assert_eq!(homology_rank(&cx, 1).unwrap(), m);
        assert_eq!(homology_rank(&cx, 0).unwrap(), 1);
    }

    #[test]
    fn two_disjoint_points_homology() {
        let cx = ChainComplex::new(vec!["x".into(), "y".into()], vec![]);
        assert_eq!(homology_rank(&cx, 0).unwrap(), 2);
        assert_eq!(homology_rank(&cx, 1).unwrap(), 0);
    }

    #[test]
    fn segment_homology_is_contractible() {
        let cx = ChainComplex::new(
            vec!["x".into(), "y".into()],
            vec![("s".into(), 0, 1)],
        );
        assert_eq!(homology_rank(&cx, 0).unwrap(), 1);
        assert_eq!(homology_rank(&cx, 1).unwrap(), 0);
    }

    #[test]
    fn root_complex_h1_rank_is_total_fibers() {
        let (h, a) = four_leaf();
        let parent = build_parent_complex(&h, &a, 0, &opts()).unwrap();
        assert_eq!(homology_rank(&parent, 1).unwrap(), 12);
    }

    #[test]
    fn corank_matches_worked_example() {
        let (h, a) = four_leaf();
        assert_eq!(corank(&h, &a, 0, &opts()).unwrap(), 5);
        assert_eq!(corank(&h, &a, 1, &opts()).unwrap(), 2);
        assert_eq!(corank(&h, &a, 2, &opts()).unwrap(), 5);
    }

    #[test]
    fn corank_zero_without_connecting_fibers() {
        let h = AtlasHierarchy::parse(
            "node_id,name,parent_id,level,roi_index\n\
             0,root,,1,\n\
             1,u,0,2,\n\
             2,v,0,2,\n\
             3,l0,1,3,0\n\
             4,l1,1,3,1\n\
             5,l2,2,3,2\n\
             6,l3,2,3,3\n",
        )
        .unwrap();
        let mut counts = vec![0u64; 16];
        counts[1] = 3; // (0,1) inside u
        counts[4] = 3;
        counts[11] = 2; // (2,3) inside v
        counts[14] = 2;
        let a = AdjacencyMatrix::from_counts(
            "s",
            4,
            counts,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap();
        assert_eq!(corank(&h, &a, 0, &opts()).unwrap(), 0);
    }

    #[test]
    fn rank_bookkeeping_identity() {
        let (h, a) = four_leaf();
        for &node in h.internal_nodes() {
            let children = build_children_complex(&h, &a, node, &opts()).unwrap();
            let parent = build_parent_complex(&h, &a, node, &opts()).unwrap();
            let c = corank(&h, &a, node, &opts()).unwrap() as usize;
            assert_eq!(
                homology_rank(&parent, 1).unwrap(),
                homology_rank(&children, 1).unwrap() + c
            );
        }
    }

    #[test]
    fn verify_theorem_on_examples() {
        let (h, a) = four_leaf();
        let report = verify_theorem(&h, &a, &opts()).unwrap();
        assert!(report.all_match());

        let zero = AdjacencyMatrix::from_counts(
            "s",
            4,
            vec![0; 16],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap();
        let report = verify_theorem(&h, &zero, &opts()).unwrap();
        assert!(report.all_match());
        assert!(report.verdicts.iter().all(|v| v.corank == 0));
    }

    #[test]
    fn single_cross_hemisphere_fiber_bundle() {
        let h = AtlasHierarchy::desikan_killiany();
        let p = h.p();
        let mut counts = vec![0u64; p * p];
        let w = 7u64;
        counts[40] = w; // entry (0, 40): left bankssts to right inferior parietal
        counts[40 * p] = w;
        let names = (0..p).map(|i| format!("r{i}")).collect();
        let a = AdjacencyMatrix::from_counts("s", p, counts, names).unwrap();
        let report = verify_theorem(h, &a, &opts()).unwrap();
        assert!(report.all_match());
        for v in &report.verdicts {
            if v.node_id == h.root_id() {
                assert_eq!(v.corank, w);
            } else {
                assert_eq!(v.corank, 0);
            }
        }
    }

    #[test]
    fn cell_budget_is_enforced() {
        let (h, a) = four_leaf();
        let tight = OracleOptions { cell_budget: 3 };
        assert!(matches!(
            corank(&h, &a, 0, &tight),
            Err(HomologyError::CellBudgetExceeded { .. })
        ));
    }

    #[test]
    fn leaf_parent_is_rejected() {
        let (h, a) = four_leaf();
        assert!(matches!(
            build_parent_complex(&h, &a, 3, &opts()),
            Err(HomologyError::LeafParent(3))
        ));
        assert!(matches!(
            build_children_complex(&h, &a, 3, &opts()),
            Err(HomologyError::LeafParent(3))
        ));
    }

    #[test]
    fn corank_invariant_under_leaf_relabeling_within_child() {
        // Swap the two leaves inside u (roi 0 and 1) in the matrix; coranks
        // must not change.
        let (h, a) = four_leaf();
        let perm = [1usize, 0, 2, 3];
        let mut counts = vec![0u64; 16];
        for i in 0..4 {
            for j in 0..4 {
                counts[i * 4 + j] = a.get(perm[i], perm[j]);
            }
        }
        let b = AdjacencyMatrix::from_counts(
            "s",
            4,
            counts,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap();
        for &node in h.internal_nodes() {
            assert_eq!(
                corank(&h, &a, node, &opts()).unwrap(),
                corank(&h, &b, node, &opts()).unwrap()
            );
        }
    }

    #[test]
    fn reduction_handles_general_columns() {
        // Rank of [[1,1,0],[0,1,1],[1,0,1]] over Q is 2 (columns sum to
        // dependent set with signs) -- build columns with mixed entries.
        let one = BigRational::one;
        let cols: Vec<SparseVec> = vec![
            vec![(0, one()), (2, one())],
            vec![(0, one()), (1, one())],
            vec![(1, one()), (2, one())],
        ];
        // Over Q these three columns are independent (determinant 2).
        assert_eq!(rank_of_columns(&cols), 3);
        let dependent: Vec<SparseVec> = vec![
            vec![(0, one()), (1, one())],
            vec![(0, one()), (1, one())],
        ];
        assert_eq!(rank_of_columns(&dependent), 1);
    }
}
