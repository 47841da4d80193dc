//! Synth config CSV: long-format rows `field,trait,node,value`.
//!
//! Scalar rows leave `trait` and `node` empty: `n`, `seed`, `base_rate`,
//! `dispersion`, `latent_sd`, `zero_variance_pairs`. Trait rows:
//! `effect,<trait>,<node name or id>,<size>`, `noise_sd,<trait>,,<sd>`,
//! `missing,<trait>,,<fraction>`. Traits appear in first-mention order; a
//! trait mentioned only by `noise_sd` is a pure-noise trait.

use ctree::atlas::AtlasHierarchy;
use ctree::synth::{SynthConfig, TraitSpec};

use crate::CliError;

pub fn parse_synth_config(text: &str, h: &AtlasHierarchy) -> Result<SynthConfig, CliError> {
    let mut config = SynthConfig::default();
    let mut traits: Vec<TraitSpec> = Vec::new();

    let trait_index = |traits: &mut Vec<TraitSpec>, name: &str| -> usize {
        match traits.iter().position(|t| t.name == name) {
            Some(idx) => idx,
            None => {
                traits.push(TraitSpec::noise(name, 1.0));
                traits.len() - 1
            }
        }
    };

    for (line_no, line) in text.lines().enumerate() {
        let line_display = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if line_no == 0 && trimmed == "field,trait,node,value" {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(CliError::validation(format!(
                "synth config line {line_display}: expected `field,trait,node,value`, got `{trimmed}`"
            )));
        }
        let (field, trait_name, node, value) = (fields[0], fields[1], fields[2], fields[3]);
        let bad_value = |what: &str| {
            CliError::validation(format!(
                "synth config line {line_display}: bad {what} `{value}`"
            ))
        };
        match field {
            "n" => config.n = value.parse().map_err(|_| bad_value("subject count"))?,
            "seed" => config.seed = value.parse().map_err(|_| bad_value("seed"))?,
            "base_rate" => {
                config.base_rate = value.parse().map_err(|_| bad_value("base rate"))?
            }
            "dispersion" => {
                config.dispersion = value.parse().map_err(|_| bad_value("dispersion"))?
            }
            "latent_sd" => {
                config.latent_sd = value.parse().map_err(|_| bad_value("latent sd"))?
            }
            "zero_variance_pairs" => {
                config.zero_variance_pairs =
                    value.parse().map_err(|_| bad_value("pair count"))?
            }
            "effect" => {
                if trait_name.is_empty() {
                    return Err(CliError::validation(format!(
                        "synth config line {line_display}: effect rows need a trait name"
                    )));
                }
                let node_id = match node.parse::<usize>() {
                    Ok(id) if h.position(id).is_some() => id,
                    _ => {
                        h.node_by_name(node)
                            .ok_or_else(|| {
                                CliError::validation(format!(
                                    "synth config line {line_display}: unknown node `{node}`"
                                ))
                            })?
                            .node_id
                    }
                };
                let size: f64 = value.parse().map_err(|_| bad_value("effect size"))?;
                let idx = trait_index(&mut traits, trait_name);
                traits[idx].effects.push((node_id, size));
            }
            "noise_sd" => {
                let idx = trait_index(&mut traits, trait_name);
                traits[idx].noise_sd = value.parse().map_err(|_| bad_value("noise sd"))?;
            }
            "missing" => {
                let idx = trait_index(&mut traits, trait_name);
                traits[idx].missing_fraction =
                    value.parse().map_err(|_| bad_value("missing fraction"))?;
            }
            other => {
                return Err(CliError::validation(format!(
                    "synth config line {line_display}: unknown field `{other}`"
                )))
            }
        }
    }
    config.traits = traits;
    Ok(config)
}
