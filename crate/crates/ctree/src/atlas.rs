//! Region hierarchies: parsing, validation and queries over the rooted tree
//! of named brain regions whose leaves are bound to ROI indices.

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

/// Identifier of a hierarchy node, as given in the hierarchy file.
pub type NodeId = usize;

const HIERARCHY_HEADER: [&str; 5] = ["node_id", "name", "parent_id", "level", "roi_index"];

/// Errors raised while parsing or querying a hierarchy file.
#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("line {line}: cannot read record: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("bad header: expected `node_id,name,parent_id,level,roi_index`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: field `{field}` has invalid value `{value}`")]
    BadField {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: node name must be nonempty")]
    EmptyName { line: u64 },
    #[error("line {line}: duplicate node_id {id}")]
    DuplicateNodeId { line: u64, id: NodeId },
    #[error("line {line}: duplicate node name `{name}`")]
    DuplicateName { line: u64, name: String },
    #[error("hierarchy has no root (every node has a parent_id)")]
    NoRoot,
    #[error("line {line}: second root `{name}` (exactly one node may have an empty parent_id)")]
    MultipleRoots { line: u64, name: String },
    #[error("line {line}: root must be at level 1, found level {level}")]
    RootLevel { line: u64, level: u32 },
    #[error("line {line}: parent_id {parent} does not name any node")]
    OrphanParent { line: u64, parent: NodeId },
    #[error("line {line}: node {id} is part of a parent cycle")]
    Cycle { line: u64, id: NodeId },
    #[error("line {line}: node level {got} but parent is at level {parent_level}")]
    LevelMismatch {
        line: u64,
        got: u32,
        parent_level: u32,
    },
    #[error("line {line}: internal node `{name}` carries a roi_index")]
    RoiOnInternal { line: u64, name: String },
    #[error("line {line}: leaf `{name}` is missing a roi_index")]
    LeafMissingRoi { line: u64, name: String },
    #[error("line {line}: duplicate roi_index {roi}")]
    DuplicateRoi { line: u64, roi: usize },
    #[error("roi_index values must cover 0..{p} exactly; index {roi} is out of range")]
    RoiOutOfRange { roi: usize, p: usize },
    #[error("unknown node_id {0}")]
    UnknownNode(NodeId),
    #[error("roi index {roi} out of range for hierarchy with {p} leaves")]
    RoiIndex { roi: usize, p: usize },
}

/// One node of a region hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyNode {
    pub node_id: NodeId,
    pub name: String,
    pub parent_id: Option<NodeId>,
    pub level: u32,
    /// Index into the adjacency matrix; present iff the node is a leaf.
    pub roi_index: Option<usize>,
}

/// A validated rooted region hierarchy.
///
/// Nodes are kept in file order; all derived lookups (children, leaf order,
/// descendant leaf sets) are precomputed at parse time, and the structure is
/// immutable afterwards so it can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct AtlasHierarchy {
    nodes: Vec<HierarchyNode>,
    index_of: HashMap<NodeId, usize>,
    parent_pos: Vec<Option<usize>>,
    children_pos: Vec<Vec<usize>>,
    root_pos: usize,
    p: usize,
    max_level: u32,
    level_counts: Vec<usize>,
    leaf_pos_by_roi: Vec<usize>,
    internal_ids: Vec<NodeId>,
    leaf_ids: Vec<NodeId>,
    descendant_rois: Vec<Vec<usize>>,
}

impl PartialEq for AtlasHierarchy {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

impl AtlasHierarchy {
    /// Parse and validate a hierarchy from CSV text.
    ///
    /// Format: header `node_id,name,parent_id,level,roi_index`, `#` comment
    /// lines allowed, empty parent_id for the root, empty roi_index for
    /// internal nodes. Every violation is reported with its line number.
    pub fn parse(text: &str) -> Result<Self, AtlasError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        {
            let headers = reader
                .headers()
                .map_err(|e| AtlasError::BadHeader(e.to_string()))?;
            let got: Vec<&str> = headers.iter().collect();
            if got != HIERARCHY_HEADER {
                return Err(AtlasError::BadHeader(got.join(",")));
            }
        }

        let mut nodes = Vec::new();
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| AtlasError::Csv {
                line: e
                    .position()
                    .map(csv::Position::line)
                    .unwrap_or_default(),
                source: e,
            })?;
            let line = record.position().map(csv::Position::line).unwrap_or(0);
            let field = |i: usize| record.get(i).unwrap_or("");

            let node_id = field(0).parse::<NodeId>().map_err(|_| AtlasError::BadField {
                line,
                field: "node_id",
                value: field(0).to_string(),
            })?;
            let name = field(1).to_string();
            if name.is_empty() {
                return Err(AtlasError::EmptyName { line });
            }
            let parent_id = match field(2) {
                "" => None,
                s => Some(s.parse::<NodeId>().map_err(|_| AtlasError::BadField {
                    line,
                    field: "parent_id",
                    value: s.to_string(),
                })?),
            };
            let level = field(3).parse::<u32>().ok().filter(|&l| l >= 1).ok_or(
                AtlasError::BadField {
                    line,
                    field: "level",
                    value: field(3).to_string(),
                },
            )?;
            let roi_index = match field(4) {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|_| AtlasError::BadField {
                    line,
                    field: "roi_index",
                    value: s.to_string(),
                })?),
            };

            nodes.push(HierarchyNode {
                node_id,
                name,
                parent_id,
                level,
                roi_index,
            });
            lines.push(line);
        }

        Self::validate(nodes, &lines)
    }

    fn validate(nodes: Vec<HierarchyNode>, lines: &[u64]) -> Result<Self, AtlasError> {
        let mut index_of = HashMap::with_capacity(nodes.len());
        let mut names = HashMap::new();
        for (pos, node) in nodes.iter().enumerate() {
            if index_of.insert(node.node_id, pos).is_some() {
                return Err(AtlasError::DuplicateNodeId {
                    line: lines[pos],
                    id: node.node_id,
                });
            }
            if names.insert(node.name.clone(), pos).is_some() {
                return Err(AtlasError::DuplicateName {
                    line: lines[pos],
                    name: node.name.clone(),
                });
            }
        }

        let mut root_pos = None;
        for (pos, node) in nodes.iter().enumerate() {
            if node.parent_id.is_none() {
                if root_pos.is_some() {
                    return Err(AtlasError::MultipleRoots {
                        line: lines[pos],
                        name: node.name.clone(),
                    });
                }
                root_pos = Some(pos);
            }
        }
        let root_pos = root_pos.ok_or(AtlasError::NoRoot)?;
        if nodes[root_pos].level != 1 {
            return Err(AtlasError::RootLevel {
                line: lines[root_pos],
                level: nodes[root_pos].level,
            });
        }

        let mut parent_pos = vec![None; nodes.len()];
        for (pos, node) in nodes.iter().enumerate() {
            if let Some(pid) = node.parent_id {
                let ppos = *index_of.get(&pid).ok_or(AtlasError::OrphanParent {
                    line: lines[pos],
                    parent: pid,
                })?;
                parent_pos[pos] = Some(ppos);
            }
        }

        // Cycle check by walking parent chains with a step budget; level
        // consistency is checked afterwards so that a cyclic file is reported
        // as a cycle, not as a level mismatch.
        for (pos, _) in nodes.iter().enumerate() {
            let mut cur = pos;
            for _ in 0..=nodes.len() {
                match parent_pos[cur] {
                    Some(next) => cur = next,
                    None => break,
                }
            }
            if parent_pos[cur].is_some() {
                return Err(AtlasError::Cycle {
                    line: lines[pos],
                    id: nodes[pos].node_id,
                });
            }
        }

        for (pos, node) in nodes.iter().enumerate() {
            if let Some(ppos) = parent_pos[pos] {
                let parent_level = nodes[ppos].level;
                if node.level != parent_level + 1 {
                    return Err(AtlasError::LevelMismatch {
                        line: lines[pos],
                        got: node.level,
                        parent_level,
                    });
                }
            }
        }

        let mut children_pos = vec![Vec::new(); nodes.len()];
        for (pos, _) in nodes.iter().enumerate() {
            if let Some(ppos) = parent_pos[pos] {
                children_pos[ppos].push(pos);
            }
        }

        let mut leaf_rois = HashMap::new();
        let mut p = 0usize;
        for (pos, node) in nodes.iter().enumerate() {
            let is_leaf = children_pos[pos].is_empty();
            match (is_leaf, node.roi_index) {
                (false, Some(_)) => {
                    return Err(AtlasError::RoiOnInternal {
                        line: lines[pos],
                        name: node.name.clone(),
                    })
                }
                (true, None) => {
                    return Err(AtlasError::LeafMissingRoi {
                        line: lines[pos],
                        name: node.name.clone(),
                    })
                }
                (true, Some(roi)) => {
                    if leaf_rois.insert(roi, pos).is_some() {
                        return Err(AtlasError::DuplicateRoi {
                            line: lines[pos],
                            roi,
                        });
                    }
                    p += 1;
                }
                (false, None) => {}
            }
        }
        let mut leaf_pos_by_roi = vec![usize::MAX; p];
        for (&roi, &pos) in &leaf_rois {
            if roi >= p {
                return Err(AtlasError::RoiOutOfRange { roi, p });
            }
            leaf_pos_by_roi[roi] = pos;
        }

        let max_level = nodes.iter().map(|n| n.level).max().unwrap_or(0);
        let mut level_counts = vec![0usize; max_level as usize];
        for node in &nodes {
            level_counts[(node.level - 1) as usize] += 1;
        }

        // Breadth-first by level, then file order. Nodes are already in file
        // order, so a stable sort on level is exactly that.
        let mut by_level: Vec<usize> = (0..nodes.len()).collect();
        by_level.sort_by_key(|&pos| nodes[pos].level);
        let internal_ids = by_level
            .iter()
            .filter(|&&pos| !children_pos[pos].is_empty())
            .map(|&pos| nodes[pos].node_id)
            .collect();
        let leaf_ids = by_level
            .iter()
            .filter(|&&pos| children_pos[pos].is_empty())
            .map(|&pos| nodes[pos].node_id)
            .collect();

        let mut descendant_rois = vec![Vec::new(); nodes.len()];
        for &pos in by_level.iter().rev() {
            if let Some(roi) = nodes[pos].roi_index {
                descendant_rois[pos].push(roi);
            }
            let kids = children_pos[pos].clone();
            for kid in kids {
                let sub = descendant_rois[kid].clone();
                descendant_rois[pos].extend(sub);
            }
        }
        for rois in &mut descendant_rois {
            rois.sort_unstable();
        }

        Ok(Self {
            nodes,
            index_of,
            parent_pos,
            children_pos,
            root_pos,
            p,
            max_level,
            level_counts,
            leaf_pos_by_roi,
            internal_ids,
            leaf_ids,
            descendant_rois,
        })
    }

    /// The bundled Desikan-Killiany hierarchy (68 leaves, 23 internal nodes).
    pub fn desikan_killiany() -> &'static AtlasHierarchy {
        static DK: OnceLock<AtlasHierarchy> = OnceLock::new();
        DK.get_or_init(|| {
            AtlasHierarchy::parse(include_str!("../data/dk_hierarchy.csv"))
                .expect("bundled DK hierarchy must be valid")
        })
    }

    /// Serialize back to the CSV hierarchy format. `parse(serialize(h)) == h`.
    pub fn serialize(&self) -> String {
        let mut out = String::from("node_id,name,parent_id,level,roi_index\n");
        for node in &self.nodes {
            let parent = node.parent_id.map(|p| p.to_string()).unwrap_or_default();
            let roi = node.roi_index.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                node.node_id, node.name, parent, node.level, roi
            ));
        }
        out
    }

    /// Number of leaves (ROIs).
    pub fn p(&self) -> usize {
        self.p
    }

    /// Total node count.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Deepest level in the hierarchy (root is level 1).
    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Number of nodes at a given level, 0 for levels beyond the tree.
    pub fn level_count(&self, level: u32) -> usize {
        if level == 0 || level > self.max_level {
            0
        } else {
            self.level_counts[(level - 1) as usize]
        }
    }

    pub fn root_id(&self) -> NodeId {
        self.nodes[self.root_pos].node_id
    }

    /// Nodes in file order.
    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&HierarchyNode, AtlasError> {
        self.index_of
            .get(&id)
            .map(|&pos| &self.nodes[pos])
            .ok_or(AtlasError::UnknownNode(id))
    }

    /// File-order position of a node id.
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    pub fn node_at(&self, pos: usize) -> &HierarchyNode {
        &self.nodes[pos]
    }

    pub fn node_by_name(&self, name: &str) -> Option<&HierarchyNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn children(&self, id: NodeId) -> Result<Vec<NodeId>, AtlasError> {
        let pos = *self.index_of.get(&id).ok_or(AtlasError::UnknownNode(id))?;
        Ok(self.children_pos[pos]
            .iter()
            .map(|&c| self.nodes[c].node_id)
            .collect())
    }

    pub fn parent(&self, id: NodeId) -> Result<Option<NodeId>, AtlasError> {
        let pos = *self.index_of.get(&id).ok_or(AtlasError::UnknownNode(id))?;
        Ok(self.parent_pos[pos].map(|p| self.nodes[p].node_id))
    }

    pub fn is_leaf(&self, id: NodeId) -> Result<bool, AtlasError> {
        let pos = *self.index_of.get(&id).ok_or(AtlasError::UnknownNode(id))?;
        Ok(self.children_pos[pos].is_empty())
    }

    /// The leaf node bound to a ROI index.
    pub fn leaf_by_roi(&self, roi: usize) -> Result<NodeId, AtlasError> {
        if roi >= self.p {
            return Err(AtlasError::RoiIndex { roi, p: self.p });
        }
        Ok(self.nodes[self.leaf_pos_by_roi[roi]].node_id)
    }

    /// Sorted ROI indices of all leaves under a node (the node's region).
    pub fn descendant_rois(&self, id: NodeId) -> Result<&[usize], AtlasError> {
        let pos = *self.index_of.get(&id).ok_or(AtlasError::UnknownNode(id))?;
        Ok(&self.descendant_rois[pos])
    }

    /// Deepest node having both leaves as descendants; `lca(a, a)` is the
    /// leaf itself.
    pub fn lowest_common_ancestor(
        &self,
        leaf_a: usize,
        leaf_b: usize,
    ) -> Result<NodeId, AtlasError> {
        if leaf_a >= self.p {
            return Err(AtlasError::RoiIndex {
                roi: leaf_a,
                p: self.p,
            });
        }
        if leaf_b >= self.p {
            return Err(AtlasError::RoiIndex {
                roi: leaf_b,
                p: self.p,
            });
        }
        let mut a = self.leaf_pos_by_roi[leaf_a];
        let mut b = self.leaf_pos_by_roi[leaf_b];
        while self.nodes[a].level > self.nodes[b].level {
            a = self.parent_pos[a].expect("non-root has parent");
        }
        while self.nodes[b].level > self.nodes[a].level {
            b = self.parent_pos[b].expect("non-root has parent");
        }
        while a != b {
            a = self.parent_pos[a].expect("non-root has parent");
            b = self.parent_pos[b].expect("non-root has parent");
        }
        Ok(self.nodes[a].node_id)
    }

    /// Internal node ids, breadth-first by level then file order.
    pub fn internal_nodes(&self) -> &[NodeId] {
        &self.internal_ids
    }

    /// Leaf node ids, breadth-first by level then file order.
    pub fn leaf_nodes(&self) -> &[NodeId] {
        &self.leaf_ids
    }

    /// Stable fingerprint of the hierarchy content, used to detect mismatched
    /// hierarchy/tree pairings.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the canonical serialization.
        let mut hash = 0xcbf29ce484222325u64;
        for byte in self.serialize().as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }
}
