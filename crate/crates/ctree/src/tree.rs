//! Tree representation of a connectome: each internal node's weight is the
//! number of fibers connecting any two distinct children of that node, and
//! each leaf's weight is the matrix diagonal at its ROI.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::atlas::{AtlasHierarchy, NodeId};
use crate::connectome::{AdjacencyMatrix, ConnectomeError, FeatureMatrix};
use crate::ErrorKind;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("matrix has {matrix_p} ROIs but hierarchy has {hierarchy_p} leaves")]
    DimensionMismatch { matrix_p: usize, hierarchy_p: usize },
    #[error("tree was built against a different hierarchy")]
    HierarchyMismatch,
    #[error("tree CSV line {line}: {message}")]
    BadTreeCsv { line: usize, message: String },
    #[error(transparent)]
    Feature(#[from] ConnectomeError),
}

impl TreeError {
    pub fn kind(&self) -> ErrorKind {
        ErrorKind::Validation
    }
}

/// Node weights aligned with an [`AtlasHierarchy`], integer-exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectomeTree {
    subject_id: String,
    hierarchy_fingerprint: u64,
    /// One weight per node, indexed by file-order position.
    weights: Vec<u64>,
}

impl ConnectomeTree {
    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn weight(&self, h: &AtlasHierarchy, id: NodeId) -> Result<u64, TreeError> {
        self.check(h)?;
        let pos = h.position(id).ok_or(TreeError::HierarchyMismatch)?;
        Ok(self.weights[pos])
    }

    fn check(&self, h: &AtlasHierarchy) -> Result<(), TreeError> {
        if h.fingerprint() != self.hierarchy_fingerprint {
            return Err(TreeError::HierarchyMismatch);
        }
        Ok(())
    }

    /// Parse a tree back from its CSV form against the hierarchy it was
    /// built for. Every node must appear exactly once.
    pub fn from_csv(h: &AtlasHierarchy, text: &str) -> Result<Self, TreeError> {
        let mut weights = vec![None; h.node_count()];
        let mut subject_id = None;
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line.trim() != "subject_id,node_name,level,weight" {
                    return Err(TreeError::BadTreeCsv {
                        line: 1,
                        message: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(TreeError::BadTreeCsv {
                    line: idx + 1,
                    message: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let subject = fields[0].to_string();
            if let Some(existing) = &subject_id {
                if *existing != subject {
                    return Err(TreeError::BadTreeCsv {
                        line: idx + 1,
                        message: "multiple subject ids in one tree file".into(),
                    });
                }
            } else {
                subject_id = Some(subject);
            }
            let node = h
                .node_by_name(fields[1])
                .ok_or_else(|| TreeError::BadTreeCsv {
                    line: idx + 1,
                    message: format!("unknown node `{}`", fields[1]),
                })?;
            let weight = fields[3].parse::<u64>().map_err(|_| TreeError::BadTreeCsv {
                line: idx + 1,
                message: format!("bad weight `{}`", fields[3]),
            })?;
            let pos = h.position(node.node_id).expect("node from hierarchy");
            if weights[pos].replace(weight).is_some() {
                return Err(TreeError::BadTreeCsv {
                    line: idx + 1,
                    message: format!("node `{}` listed twice", fields[1]),
                });
            }
        }
        let subject_id = subject_id.ok_or(TreeError::BadTreeCsv {
            line: 0,
            message: "no data rows".into(),
        })?;
        let weights = weights
            .into_iter()
            .enumerate()
            .map(|(pos, w)| {
                w.ok_or_else(|| TreeError::BadTreeCsv {
                    line: 0,
                    message: format!("node `{}` missing", h.node_at(pos).name),
                })
            })
            .collect::<Result<Vec<u64>, TreeError>>()?;
        Ok(Self {
            subject_id,
            hierarchy_fingerprint: h.fingerprint(),
            weights,
        })
    }

    /// Tree output CSV: `subject_id,node_name,level,weight`, nodes ordered by
    /// level then file order.
    pub fn to_csv(&self, h: &AtlasHierarchy) -> Result<String, TreeError> {
        self.check(h)?;
        let mut out = String::from("subject_id,node_name,level,weight\n");
        for &id in h.internal_nodes().iter().chain(h.leaf_nodes()) {
            let node = h.node(id).expect("id from hierarchy");
            let pos = h.position(id).expect("id from hierarchy");
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.subject_id, node.name, node.level, self.weights[pos]
            ));
        }
        Ok(out)
    }
}

/// Generic LCA aggregation shared by the integer and real-valued modes: the
/// weight of an internal node is the sum over leaf pairs whose lowest common
/// ancestor it is, and leaf weights are the diagonal.
fn aggregate<T, F>(h: &AtlasHierarchy, p: usize, mut entry: F) -> Vec<T>
where
    T: Copy + Default + std::ops::AddAssign,
    F: FnMut(usize, usize) -> T,
{
    let mut weights = vec![T::default(); h.node_count()];
    for a in 0..p {
        for b in (a + 1)..p {
            let lca = h.lowest_common_ancestor(a, b).expect("valid leaves");
            weights[h.position(lca).expect("hierarchy node")] += entry(a, b);
        }
    }
    for roi in 0..p {
        let leaf = h.leaf_by_roi(roi).expect("valid roi");
        weights[h.position(leaf).expect("hierarchy node")] += entry(roi, roi);
    }
    weights
}

/// Build the tree representation of one subject's matrix.
pub fn build_tree(h: &AtlasHierarchy, a: &AdjacencyMatrix) -> Result<ConnectomeTree, TreeError> {
    if a.p() != h.p() {
        return Err(TreeError::DimensionMismatch {
            matrix_p: a.p(),
            hierarchy_p: h.p(),
        });
    }
    let weights = aggregate::<u64, _>(h, a.p(), |i, j| a.get(i, j));
    Ok(ConnectomeTree {
        subject_id: a.subject_id().to_string(),
        hierarchy_fingerprint: h.fingerprint(),
        weights,
    })
}

/// Real-valued tree weights for weighted (non-integer) connectivity matrices.
/// The homology cross-check does not apply in this mode; corank is defined on
/// fiber multisets.
pub fn build_tree_real(
    h: &AtlasHierarchy,
    values: &DMatrix<f64>,
    subject_id: &str,
) -> Result<(String, Vec<(NodeId, f64)>), TreeError> {
    if values.nrows() != h.p() || values.ncols() != h.p() {
        return Err(TreeError::DimensionMismatch {
            matrix_p: values.nrows(),
            hierarchy_p: h.p(),
        });
    }
    let weights = aggregate::<f64, _>(h, h.p(), |i, j| values[(i, j)]);
    let named = h
        .nodes()
        .iter()
        .enumerate()
        .map(|(pos, node)| (node.node_id, weights[pos]))
        .collect();
    Ok((subject_id.to_string(), named))
}

/// One tree's weights as a feature row: internal nodes first (level then file
/// order), leaves appended iff `include_leaves`. Labels are node names.
pub fn vectorize_tree(
    h: &AtlasHierarchy,
    t: &ConnectomeTree,
    include_leaves: bool,
) -> Result<(Vec<f64>, Vec<String>), TreeError> {
    t.check(h)?;
    let ids: Vec<NodeId> = if include_leaves {
        h.internal_nodes().iter().chain(h.leaf_nodes()).copied().collect()
    } else {
        h.internal_nodes().to_vec()
    };
    let mut values = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        values.push(t.weight(h, id)? as f64);
        labels.push(h.node(id).expect("id from hierarchy").name.clone());
    }
    Ok((values, labels))
}

/// Build trees for a whole cohort and stack the vectorized rows.
pub fn trees_to_features(
    h: &AtlasHierarchy,
    trees: &[ConnectomeTree],
    include_leaves: bool,
) -> Result<FeatureMatrix, TreeError> {
    assert!(!trees.is_empty(), "empty cohort");
    let (first_row, labels) = vectorize_tree(h, &trees[0], include_leaves)?;
    let d = first_row.len();
    let mut values = DMatrix::zeros(trees.len(), d);
    let mut subject_ids = Vec::with_capacity(trees.len());
    for (s, t) in trees.iter().enumerate() {
        let (row, _) = vectorize_tree(h, t, include_leaves)?;
        for (j, v) in row.into_iter().enumerate() {
            values[(s, j)] = v;
        }
        subject_ids.push(t.subject_id().to_string());
    }
    Ok(FeatureMatrix::new(
        values,
        labels,
        (0..d).collect(),
        subject_ids,
    )?)
}

/// Sums checked by [`conservation_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservationReport {
    pub internal_weight_sum: u64,
    pub upper_triangle_sum: u64,
    pub leaf_weight_sum: u64,
    pub trace: u64,
}

impl ConservationReport {
    pub fn holds(&self) -> bool {
        self.internal_weight_sum == self.upper_triangle_sum && self.leaf_weight_sum == self.trace
    }
}

/// Check the partition identity: internal weights sum to the strict
/// upper-triangle total (every off-diagonal pair feeds exactly its LCA), and
/// leaf weights sum to the trace.
pub fn conservation_check(
    h: &AtlasHierarchy,
    a: &AdjacencyMatrix,
    t: &ConnectomeTree,
) -> Result<ConservationReport, TreeError> {
    t.check(h)?;
    let mut internal_weight_sum = 0u64;
    for &id in h.internal_nodes() {
        internal_weight_sum += t.weight(h, id)?;
    }
    let mut leaf_weight_sum = 0u64;
    for &id in h.leaf_nodes() {
        leaf_weight_sum += t.weight(h, id)?;
    }
    Ok(ConservationReport {
        internal_weight_sum,
        upper_triangle_sum: a.upper_triangle_sum(),
        leaf_weight_sum,
        trace: a.trace(),
    })
}
