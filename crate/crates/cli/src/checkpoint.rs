//! Versioned textual model checkpoints.
//!
//! Format (line-oriented, stable across releases):
//!
//! ```text
//! diffpool-checkpoint v1
//! feature_dim <n>
//! num_classes <n>
//! max_nodes <n>
//! [config]
//! <key> <value>          architecture keys, one per line
//! [params]
//! <name> <rows> <cols> <hex> <hex> ...
//! [buffers]
//! <name> <len> <hex> <hex> ...
//! [end]
//! ```
//!
//! Every value is an IEEE-754 double encoded as 16 lowercase hex digits of
//! its bit pattern, so restores are bit-exact.

use std::fs;
use std::path::Path;

use diffpool_core::gnn::GnnVariant;
use diffpool_core::model::{build_model, AssignmentMode, HierarchicalModel, ModelConfig, Readout};

use crate::exit::{CliError, Result};

const HEADER: &str = "diffpool-checkpoint v1";

fn f64_to_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn f64_from_hex(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| CliError::BadConfig(format!("checkpoint: bad float encoding {s:?}")))
}

pub fn save(path: &Path, model: &HierarchicalModel) -> Result<()> {
    let c = &model.config;
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("feature_dim {}\n", model.feature_dim));
    out.push_str(&format!("num_classes {}\n", c.num_classes));
    out.push_str(&format!("max_nodes {}\n", c.max_nodes));
    out.push_str("[config]\n");
    out.push_str(&format!("hidden_dim {}\n", c.hidden_dim));
    out.push_str(&format!("gnn_layers_per_block {}\n", c.gnn_layers_per_block));
    out.push_str(&format!("num_diffpool_layers {}\n", c.num_diffpool_layers));
    out.push_str(&format!("cluster_ratio {}\n", f64_to_hex(c.cluster_ratio)));
    out.push_str(&format!(
        "gnn_variant {}\n",
        match c.gnn_variant {
            GnnVariant::Gcn => "gcn",
            GnnVariant::GraphsageMean => "graphsage_mean",
        }
    ));
    out.push_str(&format!("use_bn {}\n", c.use_bn));
    out.push_str(&format!("use_l2_norm {}\n", c.use_l2_norm));
    out.push_str(&format!("use_link_pred {}\n", c.use_link_pred));
    out.push_str(&format!("use_entropy {}\n", c.use_entropy));
    out.push_str(&format!(
        "readout {}\n",
        match c.readout {
            Readout::ConcatAllLevels => "concat_all_levels",
            Readout::FinalOnly => "final_only",
        }
    ));
    out.push_str(&format!(
        "assignment_mode {}\n",
        match c.assignment_mode {
            AssignmentMode::Learned => "learned",
            AssignmentMode::Deterministic => "deterministic",
        }
    ));
    out.push_str("[params]\n");
    for p in model.store().params() {
        out.push_str(&format!(
            "{} {} {}",
            p.name,
            p.value.rows(),
            p.value.cols()
        ));
        for &v in p.value.data() {
            out.push(' ');
            out.push_str(&f64_to_hex(v));
        }
        out.push('\n');
    }
    out.push_str("[buffers]\n");
    for (name, data) in model.store().buffers() {
        out.push_str(&format!("{name} {}", data.len()));
        for &v in data {
            out.push(' ');
            out.push_str(&f64_to_hex(v));
        }
        out.push('\n');
    }
    out.push_str("[end]\n");
    fs::write(path, out)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<HierarchicalModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::BadConfig(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let bad = |msg: &str| CliError::BadConfig(format!("checkpoint {}: {msg}", path.display()));

    if lines.next() != Some(HEADER) {
        return Err(bad("missing or unsupported header"));
    }
    let mut feature_dim = 0usize;
    let mut num_classes = 0usize;
    let mut max_nodes = 0usize;
    for _ in 0..3 {
        let line = lines.next().ok_or_else(|| bad("truncated preamble"))?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad("malformed preamble line"))?;
        let n: usize = value.parse().map_err(|_| bad("bad preamble value"))?;
        match key {
            "feature_dim" => feature_dim = n,
            "num_classes" => num_classes = n,
            "max_nodes" => max_nodes = n,
            _ => return Err(bad("unexpected preamble key")),
        }
    }
    if lines.next() != Some("[config]") {
        return Err(bad("missing [config] section"));
    }
    let mut config = ModelConfig::new(num_classes, max_nodes);
    for line in lines.by_ref() {
        if line == "[params]" {
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad("malformed config line"))?;
        match key {
            "hidden_dim" => config.hidden_dim = value.parse().map_err(|_| bad("bad hidden_dim"))?,
            "gnn_layers_per_block" => {
                config.gnn_layers_per_block =
                    value.parse().map_err(|_| bad("bad gnn_layers_per_block"))?
            }
            "num_diffpool_layers" => {
                config.num_diffpool_layers =
                    value.parse().map_err(|_| bad("bad num_diffpool_layers"))?
            }
            "cluster_ratio" => config.cluster_ratio = f64_from_hex(value)?,
            "gnn_variant" => {
                config.gnn_variant = match value {
                    "gcn" => GnnVariant::Gcn,
                    "graphsage_mean" => GnnVariant::GraphsageMean,
                    _ => return Err(bad("bad gnn_variant")),
                }
            }
            "use_bn" => config.use_bn = value == "true",
            "use_l2_norm" => config.use_l2_norm = value == "true",
            "use_link_pred" => config.use_link_pred = value == "true",
            "use_entropy" => config.use_entropy = value == "true",
            "readout" => {
                config.readout = match value {
                    "concat_all_levels" => Readout::ConcatAllLevels,
                    "final_only" => Readout::FinalOnly,
                    _ => return Err(bad("bad readout")),
                }
            }
            "assignment_mode" => {
                config.assignment_mode = match value {
                    "learned" => AssignmentMode::Learned,
                    "deterministic" => AssignmentMode::Deterministic,
                    _ => return Err(bad("bad assignment_mode")),
                }
            }
            _ => return Err(bad(&format!("unknown config key {key:?}"))),
        }
    }

    let mut model = build_model(&config, feature_dim, 0).map_err(CliError::from)?;

    // Parameters, matched by name.
    let mut param_lines = Vec::new();
    for line in lines.by_ref() {
        if line == "[buffers]" {
            break;
        }
        param_lines.push(line);
    }
    if param_lines.len() != model.store().params().len() {
        return Err(bad(&format!(
            "expected {} parameters, found {}",
            model.store().params().len(),
            param_lines.len()
        )));
    }
    for (i, line) in param_lines.iter().enumerate() {
        let mut parts = line.split(' ');
        let name = parts.next().ok_or_else(|| bad("empty parameter line"))?;
        let rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad parameter rows"))?;
        let cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad parameter cols"))?;
        let expected = {
            let p = &model.store().params()[i];
            if p.name != name {
                return Err(bad(&format!(
                    "parameter {i} is {:?}, checkpoint has {name:?}",
                    p.name
                )));
            }
            if p.value.shape() != (rows, cols) {
                return Err(bad(&format!("parameter {name} shape mismatch")));
            }
            rows * cols
        };
        let values: Vec<f64> = parts.map(f64_from_hex).collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(bad(&format!("parameter {name} has wrong value count")));
        }
        model.store_mut().params_mut()[i]
            .value
            .data_mut()
            .copy_from_slice(&values);
    }

    // Buffers, matched by position and name.
    let buffer_names: Vec<String> = model
        .store()
        .buffers()
        .map(|(n, _)| n.to_string())
        .collect();
    let mut loaded = 0usize;
    for line in lines.by_ref() {
        if line == "[end]" {
            break;
        }
        let mut parts = line.split(' ');
        let name = parts.next().ok_or_else(|| bad("empty buffer line"))?;
        let len: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad buffer length"))?;
        if loaded >= buffer_names.len() || buffer_names[loaded] != name {
            return Err(bad(&format!("unexpected buffer {name:?}")));
        }
        let values: Vec<f64> = parts.map(f64_from_hex).collect::<Result<_>>()?;
        if values.len() != len {
            return Err(bad(&format!("buffer {name} has wrong value count")));
        }
        let id = diffpool_core::tensor::BufId(loaded);
        model.store_mut().buffer_mut(id).copy_from_slice(&values);
        loaded += 1;
    }
    if loaded != buffer_names.len() {
        return Err(bad("missing buffers"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffpool_core::graph::Graph;
    use diffpool_core::tensor::{Mode, Tensor};

    #[test]
    fn save_load_roundtrip_bit_exact() {
        let mut config = ModelConfig::new(2, 8);
        config.hidden_dim = 6;
        config.num_diffpool_layers = 1;
        config.cluster_ratio = 0.5;
        let mut model = build_model(&config, 3, 77).unwrap();

        let path = std::env::temp_dir().join(format!("diffpool-ckpt-{}.txt", std::process::id()));
        save(&path, &model).unwrap();
        let mut restored = load(&path).unwrap();
        std::fs::remove_file(&path).ok();

        for (a, b) in model
            .store()
            .params()
            .iter()
            .zip(restored.store().params().iter())
        {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }

        // Same forward outputs on a graph.
        let mut adj = Tensor::zeros(4, 4);
        for &(i, j) in &[(0, 1), (1, 2), (2, 3)] {
            adj.set(i, j, 1.0);
            adj.set(j, i, 1.0);
        }
        let g = Graph::new(adj, Tensor::ones(4, 3), 1).unwrap();
        let a = model.forward(&g, Mode::BatchStats).unwrap().logits;
        let b = restored.forward(&g, Mode::BatchStats).unwrap().logits;
        assert_eq!(a.data(), b.data());
    }
}
