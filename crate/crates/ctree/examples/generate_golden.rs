//! Regenerates the golden SVG fixtures under `tests/golden/`. Run after an
//! intentional rendering change:
//!
//! ```text
//! cargo run -p ctree --example generate_golden
//! ```

use ctree::atlas::AtlasHierarchy;
use ctree::connectome::AdjacencyMatrix;
use ctree::tree::build_tree;
use ctree::viz::{render_cca_scatter, render_chord, render_tree_diagram, ChordPlotSpec};

fn main() {
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
    let names = vec!["l0".into(), "l1".into(), "l2".into(), "l3".into()];
    let a = AdjacencyMatrix::from_counts("golden", 4, counts.clone(), names.clone()).unwrap();
    let t = build_tree(&h, &a).unwrap();
    let halved: Vec<u64> = counts.iter().map(|v| v / 2).collect();
    let b = AdjacencyMatrix::from_counts("golden-b", 4, halved, names).unwrap();
    let t_compare = build_tree(&h, &b).unwrap();

    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    std::fs::create_dir_all(&dir).unwrap();

    let chord = render_chord(&h, &t, &ChordPlotSpec::default()).unwrap();
    std::fs::write(dir.join("chord.svg"), &chord).unwrap();

    let diagram = render_tree_diagram(&h, &t, Some(&t_compare)).unwrap();
    std::fs::write(dir.join("tree_diagram.svg"), &diagram).unwrap();

    let scatter = render_cca_scatter(
        &[0.62, -0.31, 0.05],
        &[1.4, 0.8, 0.2],
        &["alpha".to_string(), "beta".to_string(), "gamma".to_string()],
        Some(&[
            "desirable".to_string(),
            "undesirable".to_string(),
            "desirable".to_string(),
        ]),
    )
    .unwrap();
    std::fs::write(dir.join("cca_scatter.svg"), &scatter).unwrap();

    println!("golden files written to {}", dir.display());
}
