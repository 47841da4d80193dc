//! Subcommand implementations. Every command validates its inputs before any
//! work, never mutates them, and writes a run manifest next to each output.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use ctree::atlas::AtlasHierarchy;
use ctree::connectome::{
    drop_sparse_traits, filter_zero_variance, impute_mean, load_traits, standardize,
    vectorize_upper, AdjacencyMatrix, FeatureMatrix,
};
use ctree::homology::{self, OracleOptions};
use ctree::regression::{
    evaluate, CvConfig, GpParams, GpRegressor, LinearRegressor, Regressor,
};
use ctree::stats::{cca_fit, pca_fit, pca_transform, trait_correlations, wilks_test, CcaModel};
use ctree::synth::generate_cohort;
use ctree::tree::{build_tree, trees_to_features, ConnectomeTree};
use ctree::viz::{render_cca_scatter, render_chord, render_tree_diagram, ChordPlotSpec};

use crate::manifest::ManifestBuilder;
use crate::synthcfg::parse_synth_config;
use crate::{CliError, CliResult, CvArgs};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, content)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn load_hierarchy(path: Option<&Path>) -> Result<AtlasHierarchy, CliError> {
    match path {
        Some(p) => Ok(AtlasHierarchy::parse(&read(p)?).map_err(ctree::Error::from)?),
        None => Ok(AtlasHierarchy::desikan_killiany().clone()),
    }
}

fn load_features(path: &Path) -> Result<FeatureMatrix, CliError> {
    Ok(load_traits(&read(path)?).map_err(ctree::Error::from)?)
}

/// Regression/BMA feature prep: drop constant columns, then standardize.
fn prepare_features(x: &FeatureMatrix) -> Result<FeatureMatrix, CliError> {
    let varying = filter_zero_variance(x).map_err(ctree::Error::from)?;
    Ok(standardize(&varying).map_err(ctree::Error::from)?)
}

fn require_aligned(a: &FeatureMatrix, b: &FeatureMatrix) -> CliResult {
    if a.subject_ids() != b.subject_ids() {
        return Err(CliError::validation(
            "subject ids of the feature and trait tables differ (same subjects, same order required)",
        ));
    }
    Ok(())
}

fn subject_id_from(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "subject".to_string())
}

pub fn synth(config_path: &Path, out_dir: &Path, hierarchy: Option<&Path>) -> CliResult {
    let mut manifest = ManifestBuilder::new("synth");
    manifest.input(config_path);
    let h = load_hierarchy(hierarchy)?;
    let config = parse_synth_config(&read(config_path)?, &h)?;
    manifest.set("seed", config.seed).set("n", config.n);

    let cohort = generate_cohort(&h, &config).map_err(ctree::Error::from)?;
    write_cohort(out_dir, &h, &cohort.matrices, &cohort.traits)?;
    write(
        &out_dir.join("ground_truth.csv"),
        &cohort.ground_truth.to_csv(),
    )?;
    manifest.output(out_dir);
    manifest.write_to(&out_dir.join("run_manifest.csv"))
}

fn write_cohort(
    out_dir: &Path,
    h: &AtlasHierarchy,
    matrices: &[AdjacencyMatrix],
    traits: &FeatureMatrix,
) -> CliResult {
    fs::create_dir_all(out_dir.join("adjacency"))?;
    let mut cohort_manifest = String::from("subject_id,adjacency_path\n");
    for m in matrices {
        let rel = format!("adjacency/{}.csv", m.subject_id());
        write(&out_dir.join(&rel), &m.to_csv())?;
        cohort_manifest.push_str(&format!("{},{rel}\n", m.subject_id()));
    }
    write(&out_dir.join("manifest.csv"), &cohort_manifest)?;
    write(&out_dir.join("traits.csv"), &traits.to_csv())?;
    write(&out_dir.join("hierarchy.csv"), &h.serialize())?;
    Ok(())
}

pub fn build(hierarchy: Option<&Path>, matrix: &Path, out: &Path) -> CliResult {
    let mut manifest = ManifestBuilder::new("build");
    if let Some(p) = hierarchy {
        manifest.input(p);
    }
    manifest.input(matrix);
    let h = load_hierarchy(hierarchy)?;
    let a = AdjacencyMatrix::load(&read(matrix)?, subject_id_from(matrix))
        .map_err(ctree::Error::from)?;
    let tree = build_tree(&h, &a).map_err(ctree::Error::from)?;
    write(out, &tree.to_csv(&h).map_err(ctree::Error::from)?)?;
    manifest.output(out);
    manifest.write_for(out)
}

pub fn verify_theorem(
    hierarchy: Option<&Path>,
    matrix: &Path,
    out: Option<&Path>,
    budget: u64,
) -> CliResult {
    let mut manifest = ManifestBuilder::new("verify-theorem");
    manifest.input(matrix).set("budget", budget);
    let h = load_hierarchy(hierarchy)?;
    let a = AdjacencyMatrix::load(&read(matrix)?, subject_id_from(matrix))
        .map_err(ctree::Error::from)?;
    let options = OracleOptions {
        cell_budget: budget,
    };
    let report = homology::verify_theorem(&h, &a, &options).map_err(ctree::Error::from)?;
    let csv = report.to_csv();
    match out {
        Some(path) => {
            write(path, &csv)?;
            manifest.output(path);
            manifest.write_for(path)?;
        }
        None => print!("{csv}"),
    }
    let matched = report.verdicts.iter().filter(|v| v.matches()).count();
    eprintln!(
        "verify-theorem: {matched}/{} internal nodes match",
        report.verdicts.len()
    );
    Ok(())
}

fn scores_to_features(
    scores: &DMatrix<f64>,
    subject_ids: &[String],
    prefix: &str,
) -> FeatureMatrix {
    let k = scores.ncols();
    let labels: Vec<String> = (1..=k).map(|j| format!("{prefix}{j}")).collect();
    FeatureMatrix::new(
        scores.clone(),
        labels,
        (0..k).collect(),
        subject_ids.to_vec(),
    )
    .expect("generated labels are unique")
}

pub fn pca(features: &Path, k: usize, out: &Path, axes: Option<&Path>) -> CliResult {
    let mut manifest = ManifestBuilder::new("pca");
    manifest.input(features).set("k", k);
    let x = load_features(features)?;
    let standardized = standardize(&x).map_err(ctree::Error::from)?;
    let model = pca_fit(standardized.values(), k).map_err(ctree::Error::from)?;
    let scores = pca_transform(&model, standardized.values()).map_err(ctree::Error::from)?;
    let score_features = scores_to_features(&scores, x.subject_ids(), "pc");
    write(out, &score_features.to_csv())?;
    if let Some(axes_path) = axes {
        let mut csv = String::from("feature");
        for j in 1..=k {
            csv.push_str(&format!(",pc{j}"));
        }
        csv.push('\n');
        for (i, label) in x.column_labels().iter().enumerate() {
            csv.push_str(label);
            for j in 0..k {
                csv.push_str(&format!(",{}", model.axes()[(i, j)]));
            }
            csv.push('\n');
        }
        write(axes_path, &csv)?;
    }
    manifest.output(out);
    manifest.write_for(out)
}

/// Shared trait preprocessing: drop sparse traits, impute the rest, then
/// standardize.
fn prepare_traits(
    traits: &FeatureMatrix,
    drop_threshold: f64,
) -> Result<FeatureMatrix, CliError> {
    let kept = drop_sparse_traits(traits, drop_threshold).map_err(ctree::Error::from)?;
    let imputed = impute_mean(&kept).map_err(ctree::Error::from)?;
    Ok(standardize(&imputed).map_err(ctree::Error::from)?)
}

fn cca_report(
    model: &CcaModel,
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    n: usize,
) -> Result<String, CliError> {
    let rows = wilks_test(model, n, x.d(), y.d());
    let variates = x.values() * model.x_loadings();
    let first = DVector::from_fn(n, |i, _| variates[(i, 0)]);
    let trait_corr = trait_correlations(&first, y.values()).map_err(ctree::Error::from)?;

    let mut out = String::from("record,component,name,value\n");
    for component in 0..model.m() {
        for (i, label) in x.column_labels().iter().enumerate() {
            out.push_str(&format!(
                "x_loading,{},{label},{}\n",
                component + 1,
                model.x_loadings()[(i, component)]
            ));
        }
        for (i, label) in y.column_labels().iter().enumerate() {
            out.push_str(&format!(
                "y_loading,{},{label},{}\n",
                component + 1,
                model.y_loadings()[(i, component)]
            ));
        }
        out.push_str(&format!(
            "correlation,{},,{}\n",
            component + 1,
            model.correlations()[component]
        ));
        let w = &rows[component];
        out.push_str(&format!("wilks_lambda,{},,{}\n", component + 1, w.lambda));
        out.push_str(&format!(
            "wilks_statistic,{},,{}\n",
            component + 1,
            w.statistic
        ));
        out.push_str(&format!(
            "wilks_df,{},,{}\n",
            component + 1,
            w.degrees_of_freedom
        ));
        out.push_str(&format!("wilks_p,{},,{}\n", component + 1, w.p_value));
        out.push_str(&format!(
            "wilks_degenerate,{},,{}\n",
            component + 1,
            w.degenerate
        ));
    }
    for (label, corr) in y.column_labels().iter().zip(&trait_corr) {
        out.push_str(&format!("trait_correlation,1,{label},{corr}\n"));
    }
    Ok(out)
}

pub fn cca(
    features: &Path,
    traits: &Path,
    out: &Path,
    ridge: f64,
    drop_sparse: f64,
) -> CliResult {
    let mut manifest = ManifestBuilder::new("cca");
    manifest
        .input(features)
        .input(traits)
        .set("ridge", ridge)
        .set("drop_sparse", drop_sparse);
    let x_raw = load_features(features)?;
    let y_raw = load_features(traits)?;
    require_aligned(&x_raw, &y_raw)?;
    let x = prepare_features(&impute_mean(&x_raw).map_err(ctree::Error::from)?)?;
    let y = prepare_traits(&y_raw, drop_sparse)?;
    let model = cca_fit(x.values(), y.values(), ridge).map_err(ctree::Error::from)?;
    let report = cca_report(&model, &x, &y, x.n())?;
    write(out, &report)?;
    manifest.output(out);
    manifest.write_for(out)
}

fn build_regressors(args: &CvArgs) -> Result<Vec<Box<dyn Regressor>>, CliError> {
    let mut regressors: Vec<Box<dyn Regressor>> = Vec::new();
    for name in args.regressors.split(',').map(str::trim) {
        match name {
            "" | "baseline" => {}
            "linear" => regressors.push(Box::new(LinearRegressor::least_squares())),
            "ridge" => regressors.push(Box::new(LinearRegressor::with_ridge(args.ridge))),
            "gp" => regressors.push(Box::new(GpRegressor {
                params: GpParams {
                    starts: args.gp_starts,
                    evals_per_start: args.gp_evals,
                },
            })),
            other => {
                return Err(CliError::validation(format!(
                    "unknown regressor `{other}` (expected linear, ridge, gp)"
                )))
            }
        }
    }
    Ok(regressors)
}

pub fn cv(
    features_tree: &Path,
    features_pca: &Path,
    traits: &Path,
    out: &Path,
    args: &CvArgs,
) -> CliResult {
    let mut manifest = ManifestBuilder::new("cv");
    manifest
        .input(features_tree)
        .input(features_pca)
        .input(traits)
        .set("folds", args.folds)
        .set("repeats", args.repeats)
        .set("seed", args.seed)
        .set("regressors", &args.regressors);
    let tree_features = prepare_features(&load_features(features_tree)?)?;
    let pca_features = prepare_features(&load_features(features_pca)?)?;
    let trait_table = load_features(traits)?;
    require_aligned(&tree_features, &trait_table)?;
    require_aligned(&pca_features, &trait_table)?;

    let regressors = build_regressors(args)?;
    let refs: Vec<&dyn Regressor> = regressors.iter().map(|b| b.as_ref()).collect();
    let representations = vec![
        ("tree".to_string(), tree_features.values().clone()),
        ("pca".to_string(), pca_features.values().clone()),
    ];
    let config = CvConfig {
        folds: args.folds,
        repeats: args.repeats,
        seed: args.seed,
    };
    let report = evaluate(
        &representations,
        trait_table.values(),
        trait_table.column_labels(),
        &refs,
        &config,
    )
    .map_err(ctree::Error::from)?;
    write(out, &report.to_csv())?;
    manifest.output(out);
    manifest.write_for(out)
}

pub fn bma(
    features: &Path,
    traits: &Path,
    trait_name: &str,
    threshold: f64,
    g: Option<f64>,
    out: &Path,
) -> CliResult {
    let mut manifest = ManifestBuilder::new("bma");
    manifest
        .input(features)
        .input(traits)
        .set("trait", trait_name)
        .set("threshold", threshold);
    let x_raw = load_features(features)?;
    let y_raw = load_features(traits)?;
    require_aligned(&x_raw, &y_raw)?;
    let trait_idx = y_raw
        .column_labels()
        .iter()
        .position(|l| l == trait_name)
        .ok_or_else(|| CliError::validation(format!("trait `{trait_name}` not found")))?;

    // Subjects missing this trait are dropped.
    let y_col = y_raw.column(trait_idx);
    let keep: Vec<usize> = (0..y_raw.n()).filter(|&i| !y_col[i].is_nan()).collect();
    if keep.len() < 2 {
        return Err(CliError::validation(format!(
            "trait `{trait_name}` has fewer than 2 observed subjects"
        )));
    }
    let x_rows = DMatrix::from_fn(keep.len(), x_raw.d(), |i, j| x_raw.values()[(keep[i], j)]);
    let x_sub = FeatureMatrix::new(
        x_rows,
        x_raw.column_labels().to_vec(),
        x_raw.column_mask().to_vec(),
        keep.iter().map(|&i| x_raw.subject_ids()[i].clone()).collect(),
    )
    .map_err(ctree::Error::from)?;
    let x = prepare_features(&x_sub)?;
    let y_vals: Vec<f64> = keep.iter().map(|&i| y_col[i]).collect();
    let y_mean = y_vals.iter().sum::<f64>() / y_vals.len() as f64;
    let y_var = y_vals.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>()
        / (y_vals.len() as f64 - 1.0);
    if y_var == 0.0 {
        return Err(CliError::validation(format!(
            "trait `{trait_name}` has zero variance"
        )));
    }
    let y = DVector::from_vec(
        y_vals.iter().map(|v| (v - y_mean) / y_var.sqrt()).collect::<Vec<f64>>(),
    );

    let g_value = g.unwrap_or(keep.len() as f64);
    manifest.set("g", g_value).set("n_retained", keep.len());
    let result = ctree::bma::bma_fit(x.values(), &y, g_value).map_err(ctree::Error::from)?;

    let mut csv = String::from("feature,inclusion_prob,avg_coef,ci_low,ci_high,selected\n");
    for (j, label) in x.column_labels().iter().enumerate() {
        csv.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            result.inclusion_prob[j],
            result.avg_coef[j],
            result.interval_low[j],
            result.interval_high[j],
            result.inclusion_prob[j] > threshold
        ));
    }
    write(out, &csv)?;
    manifest.output(out);
    manifest.write_for(out)
}

fn load_tree(h: &AtlasHierarchy, path: &Path) -> Result<ConnectomeTree, CliError> {
    Ok(ConnectomeTree::from_csv(h, &read(path)?).map_err(ctree::Error::from)?)
}

pub fn plot_chord(hierarchy: Option<&Path>, input: &Path, out: &Path) -> CliResult {
    let mut manifest = ManifestBuilder::new("plot-chord");
    manifest.input(input);
    let h = load_hierarchy(hierarchy)?;
    let tree = load_tree(&h, input)?;
    let svg = render_chord(&h, &tree, &ChordPlotSpec::default()).map_err(ctree::Error::from)?;
    write(out, &svg)?;
    manifest.output(out);
    manifest.write_for(out)
}

pub fn plot_tree(
    hierarchy: Option<&Path>,
    input: &Path,
    compare: Option<&Path>,
    out: &Path,
) -> CliResult {
    let mut manifest = ManifestBuilder::new("plot-tree");
    manifest.input(input);
    let h = load_hierarchy(hierarchy)?;
    let tree = load_tree(&h, input)?;
    let reference = match compare {
        Some(path) => {
            manifest.input(path);
            Some(load_tree(&h, path)?)
        }
        None => None,
    };
    let svg =
        render_tree_diagram(&h, &tree, reference.as_ref()).map_err(ctree::Error::from)?;
    write(out, &svg)?;
    manifest.output(out);
    manifest.write_for(out)
}

pub fn plot_cca(input: &Path, desirability: Option<&Path>, out: &Path) -> CliResult {
    let mut manifest = ManifestBuilder::new("plot-cca");
    manifest.input(input);
    let text = read(input)?;
    let mut labels = Vec::new();
    let mut correlations = Vec::new();
    let mut loadings_by_trait: Vec<(String, f64)> = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            continue;
        }
        match (fields[0], fields[1]) {
            ("trait_correlation", "1") => {
                labels.push(fields[2].to_string());
                correlations.push(fields[3].parse::<f64>().map_err(|_| {
                    CliError::validation(format!("bad correlation value `{}`", fields[3]))
                })?);
            }
            ("y_loading", "1") => {
                loadings_by_trait.push((
                    fields[2].to_string(),
                    fields[3].parse::<f64>().map_err(|_| {
                        CliError::validation(format!("bad loading value `{}`", fields[3]))
                    })?,
                ));
            }
            _ => {}
        }
    }
    if labels.is_empty() {
        return Err(CliError::validation(
            "no trait_correlation records found; is this a cca output file?",
        ));
    }
    let loadings: Vec<f64> = labels
        .iter()
        .map(|label| {
            loadings_by_trait
                .iter()
                .find(|(name, _)| name == label)
                .map(|(_, v)| *v)
                .unwrap_or(0.0)
        })
        .collect();

    let classes = match desirability {
        Some(path) => {
            manifest.input(path);
            let table = read(path)?;
            let mut map = std::collections::HashMap::new();
            for line in table.lines().skip(1) {
                if let Some((name, class)) = line.split_once(',') {
                    map.insert(name.trim().to_string(), class.trim().to_string());
                }
            }
            Some(
                labels
                    .iter()
                    .map(|l| map.get(l).cloned().unwrap_or_else(|| "unlabeled".into()))
                    .collect::<Vec<String>>(),
            )
        }
        None => None,
    };
    let svg = render_cca_scatter(&correlations, &loadings, &labels, classes.as_deref())
        .map_err(ctree::Error::from)?;
    write(out, &svg)?;
    manifest.output(out);
    manifest.write_for(out)
}

pub fn pipeline(
    synth_config: &Path,
    out_dir: &Path,
    hierarchy: Option<&Path>,
    k: Option<usize>,
    gp: bool,
    cv_args: &CvArgs,
) -> CliResult {
    let mut manifest = ManifestBuilder::new("pipeline");
    manifest
        .input(synth_config)
        .set("folds", cv_args.folds)
        .set("repeats", cv_args.repeats)
        .set("seed", cv_args.seed)
        .set("gp", gp);
    let h = load_hierarchy(hierarchy)?;
    let config = parse_synth_config(&read(synth_config)?, &h)?;
    manifest.set("synth_seed", config.seed).set("n", config.n);

    // 1. Cohort.
    let cohort = generate_cohort(&h, &config).map_err(ctree::Error::from)?;
    write_cohort(out_dir, &h, &cohort.matrices, &cohort.traits)?;
    write(
        &out_dir.join("ground_truth.csv"),
        &cohort.ground_truth.to_csv(),
    )?;

    // 2. Trees and tree features.
    let trees: Vec<ConnectomeTree> = cohort
        .matrices
        .iter()
        .map(|m| build_tree(&h, m).map_err(ctree::Error::from))
        .collect::<Result<_, _>>()?;
    let mut trees_csv = String::from("subject_id,node_name,level,weight\n");
    for tree in &trees {
        let csv = tree.to_csv(&h).map_err(ctree::Error::from)?;
        for line in csv.lines().skip(1) {
            trees_csv.push_str(line);
            trees_csv.push('\n');
        }
    }
    write(&out_dir.join("trees.csv"), &trees_csv)?;
    let tree_features = trees_to_features(&h, &trees, false).map_err(ctree::Error::from)?;
    write(&out_dir.join("tree_features.csv"), &tree_features.to_csv())?;

    // 3. Matrix representation: vectorize, filter, standardize, PCA.
    let am = vectorize_upper(&cohort.matrices).map_err(ctree::Error::from)?;
    let filtered = filter_zero_variance(&am).map_err(ctree::Error::from)?;
    let am_std = standardize(&filtered).map_err(ctree::Error::from)?;
    let k_value = k.unwrap_or(tree_features.d());
    let pca_model = pca_fit(am_std.values(), k_value).map_err(ctree::Error::from)?;
    let scores = pca_transform(&pca_model, am_std.values()).map_err(ctree::Error::from)?;
    let pca_features = scores_to_features(&scores, am.subject_ids(), "pc");
    write(&out_dir.join("pca_scores.csv"), &pca_features.to_csv())?;

    // 4. Processed traits.
    let traits_processed = prepare_traits(&cohort.traits, 0.10)?;
    write(
        &out_dir.join("traits_processed.csv"),
        &traits_processed.to_csv(),
    )?;

    // 5. CCA per representation.
    let tree_std = prepare_features(&tree_features)?;
    let pca_std = prepare_features(&pca_features)?;
    for (name, features) in [("tree", &tree_std), ("pca", &pca_std)] {
        let model = cca_fit(features.values(), traits_processed.values(), 1e-8)
            .map_err(ctree::Error::from)?;
        let report = cca_report(&model, features, &traits_processed, features.n())?;
        write(&out_dir.join(format!("cca_{name}.csv")), &report)?;
    }

    // 6. Cross-validated prediction on the raw trait table (missing values
    // handled per trait inside the harness).
    let mut regressors = build_regressors(cv_args)?;
    if gp && !cv_args.regressors.split(',').any(|r| r.trim() == "gp") {
        regressors.push(Box::new(GpRegressor::default()));
    }
    let refs: Vec<&dyn Regressor> = regressors.iter().map(|b| b.as_ref()).collect();
    let representations = vec![
        ("tree".to_string(), tree_std.values().clone()),
        ("pca".to_string(), pca_std.values().clone()),
    ];
    let config_cv = CvConfig {
        folds: cv_args.folds,
        repeats: cv_args.repeats,
        seed: cv_args.seed,
    };
    let report = evaluate(
        &representations,
        cohort.traits.values(),
        cohort.traits.column_labels(),
        &refs,
        &config_cv,
    )
    .map_err(ctree::Error::from)?;
    write(&out_dir.join("cv_report.csv"), &report.to_csv())?;

    // 7. BMA on the tree features for the first trait, and on the PCA scores
    // with back-projection to connection space.
    if let Some(first_trait) = cohort.traits.column_labels().first() {
        if tree_features.d() <= 25 {
            bma(
                &out_dir.join("tree_features.csv"),
                &out_dir.join("traits.csv"),
                first_trait,
                0.75,
                None,
                &out_dir.join("bma_tree.csv"),
            )?;
        }
        if k_value <= 25 {
            bma(
                &out_dir.join("pca_scores.csv"),
                &out_dir.join("traits.csv"),
                first_trait,
                0.75,
                None,
                &out_dir.join("bma_pca.csv"),
            )?;
            // theta -> beta = V_K theta, then the top connections.
            let bma_pca_text = read(&out_dir.join("bma_pca.csv"))?;
            let mut theta = Vec::with_capacity(k_value);
            for line in bma_pca_text.lines().skip(1) {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() >= 3 {
                    theta.push(fields[2].parse::<f64>().unwrap_or(0.0));
                }
            }
            let theta = DVector::from_vec(theta);
            let beta =
                ctree::bma::backproject(&theta, &pca_model).map_err(ctree::Error::from)?;
            let beta_vec: Vec<f64> = beta.iter().copied().collect();
            let m = 50.min(beta_vec.len());
            let top = ctree::bma::top_connections(&beta_vec, am_std.column_labels(), m)
                .map_err(ctree::Error::from)?;
            let mut csv = String::from("connection,coefficient\n");
            for (label, value) in top {
                csv.push_str(&format!("{label},{value}\n"));
            }
            write(&out_dir.join("bma_pca_connections.csv"), &csv)?;
        }
    }

    // 8. Plots: pooled-cohort chord, top-vs-bottom decile comparison for the
    // first trait, and the tree CCA scatter.
    let pooled = sum_matrices(&cohort.matrices)?;
    let pooled_tree = build_tree(&h, &pooled).map_err(ctree::Error::from)?;
    write(
        &out_dir.join("plots/chord.svg"),
        &render_chord(&h, &pooled_tree, &ChordPlotSpec::default()).map_err(ctree::Error::from)?,
    )?;
    if !cohort.traits.column_labels().is_empty() {
        let values = cohort.traits.column(0);
        let mut observed: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_nan()).collect();
        observed.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let decile = (observed.len() / 10).max(1);
        let bottom: Vec<AdjacencyMatrix> = observed[..decile]
            .iter()
            .map(|&i| cohort.matrices[i].clone())
            .collect();
        let top: Vec<AdjacencyMatrix> = observed[observed.len() - decile..]
            .iter()
            .map(|&i| cohort.matrices[i].clone())
            .collect();
        let top_tree = build_tree(&h, &sum_matrices(&top)?).map_err(ctree::Error::from)?;
        let bottom_tree = build_tree(&h, &sum_matrices(&bottom)?).map_err(ctree::Error::from)?;
        write(
            &out_dir.join("plots/tree_top_vs_bottom.svg"),
            &render_tree_diagram(&h, &top_tree, Some(&bottom_tree))
                .map_err(ctree::Error::from)?,
        )?;
    }
    plot_cca(
        &out_dir.join("cca_tree.csv"),
        None,
        &out_dir.join("plots/cca_tree.svg"),
    )?;

    manifest.output(out_dir);
    manifest.write_to(&out_dir.join("run_manifest.csv"))
}

fn sum_matrices(matrices: &[AdjacencyMatrix]) -> Result<AdjacencyMatrix, CliError> {
    let first = matrices
        .first()
        .ok_or_else(|| CliError::validation("empty cohort"))?;
    let p = first.p();
    let mut counts = vec![0u64; p * p];
    for m in matrices {
        for i in 0..p {
            for j in 0..p {
                counts[i * p + j] += m.get(i, j);
            }
        }
    }
    Ok(
        AdjacencyMatrix::from_counts("pooled", p, counts, first.roi_names().to_vec())
            .map_err(ctree::Error::from)?,
    )
}
