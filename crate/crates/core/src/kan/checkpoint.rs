use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::KanNetwork;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "autopl-kan";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Sample points per edge in the graph export.
pub const GRAPH_SAMPLES: usize = 21;

/// Fields readable without building the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub shape: Vec<usize>,
    pub grid: usize,
    pub order: usize,
    pub symbolic: bool,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    #[serde(flatten)]
    header: CheckpointHeader,
    network: KanNetwork,
}

fn check_header(h: &CheckpointHeader) -> Result<()> {
    if h.format != CHECKPOINT_FORMAT {
        return Err(Error::Parse(format!("not a KAN checkpoint (format '{}')", h.format)));
    }
    if h.version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: h.version.to_string(), expected: CHECKPOINT_VERSION.to_string() });
    }
    Ok(())
}

pub fn to_json(net: &KanNetwork) -> Result<String> {
    let basis = &net.layers[0].basis;
    let ck = Checkpoint {
        header: CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            shape: net.shape.clone(),
            grid: basis.grid(),
            order: basis.order(),
            symbolic: net.layers.iter().flat_map(|l| &l.edges).any(|e| e.symbolic.is_some()),
        },
        network: net.clone(),
    };
    Ok(serde_json::to_string_pretty(&ck)?)
}

/// Parses and validates a checkpoint. Floats are written in shortest
/// round-trip form, so the loaded network is bit-identical.
pub fn from_json(text: &str) -> Result<KanNetwork> {
    let header: CheckpointHeader = serde_json::from_str(text)?;
    check_header(&header)?;
    let ck: Checkpoint = serde_json::from_str(text)?;
    let mut net = ck.network;
    if net.shape != header.shape || net.layers.len() + 1 != net.shape.len() {
        return Err(Error::Parse("checkpoint shape does not match its layers".into()));
    }
    for (l, layer) in net.layers.iter_mut().enumerate() {
        layer.basis.restore();
        let (d_in, d_out) = (net.shape[l], net.shape[l + 1]);
        if layer.d_in != d_in || layer.d_out != d_out || layer.edges.len() != d_in * d_out {
            return Err(Error::Parse(format!("layer {l} does not match shape {:?}", net.shape)));
        }
        if layer.edges.iter().any(|e| e.coeffs.len() != layer.basis.n_basis()) {
            return Err(Error::Parse(format!("layer {l} has a coefficient vector of the wrong length")));
        }
    }
    if let Some(m) = &net.norm {
        if m.len() != net.shape[0] || m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Parse("checkpoint normalisation must hold one positive value per input".into()));
        }
    }
    Ok(net)
}

pub fn save(net: &KanNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(net)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<KanNetwork> {
    from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let h: CheckpointHeader = serde_json::from_str(&text)?;
    check_header(&h)?;
    Ok(h)
}

/// Edge list with importances and sampled activations, one CSV row per
/// (edge, sample point): `layer,from,to,importance,active,family,r2,x,y`.
pub fn write_graph_csv(net: &KanNetwork, x: &[Vec<f64>], path: &Path) -> Result<()> {
    let scores = net.edge_importance(x)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(["layer", "from", "to", "importance", "active", "family", "r2", "x", "y"])?;
    for (l, layer) in net.layers.iter().enumerate() {
        let (lo, hi) = layer.basis.domain();
        for p in 0..layer.d_in {
            for q in 0..layer.d_out {
                let i = layer.index(p, q);
                let e = &layer.edges[i];
                let (family, r2) = match &e.symbolic {
                    Some(s) => (s.family.name().to_string(), s.r2.to_string()),
                    None => ("spline".to_string(), String::new()),
                };
                for k in 0..GRAPH_SAMPLES {
                    let xv = lo + (hi - lo) * k as f64 / (GRAPH_SAMPLES - 1) as f64;
                    w.write_record([
                        l.to_string(),
                        p.to_string(),
                        q.to_string(),
                        scores[l][i].to_string(),
                        e.active.to_string(),
                        family.clone(),
                        r2.clone(),
                        xv.to_string(),
                        e.forward(&layer.basis, xv).to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::network::KanInit;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = KanNetwork::new(&[3, 2, 1], &KanInit { seed: 5, ..Default::default() }).unwrap();
        net.out_scale = 0.1 + 0.2;
        net.norm = Some(vec![1.0 / 3.0, 7.0, 1e-7]);
        net.layers[0].edge_mut(1, 1).active = false;
        let text = to_json(&net).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(back, net);
        let probe: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.03, -0.5, 0.77 - i as f64 * 0.05]).collect();
        let a = net.forward(&probe).unwrap();
        let b = back.forward(&probe).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let net = KanNetwork::new(&[2, 1], &KanInit::default()).unwrap();
        let text = to_json(&net).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(from_json(&text), Err(Error::Version { .. })));
        assert!(from_json("{not json").is_err());
    }

    #[test]
    fn header_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.json");
        let net = KanNetwork::new(&[4, 4, 1], &KanInit { grid: 8, ..Default::default() }).unwrap();
        save(&net, &p).unwrap();
        let h = read_header(&p).unwrap();
        assert_eq!(h.shape, vec![4, 4, 1]);
        assert_eq!((h.grid, h.order), (8, 3));
        assert!(!h.symbolic);
        assert_eq!(load(&p).unwrap(), net);
    }
}
