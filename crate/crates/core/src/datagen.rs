//! Synthetic data and network ingestion.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FeatureDataset, NetworkDataset};
use crate::partition::Partition;

/// Per-component probability that each of the first six features is 1.
pub const COMPONENT_PROBABILITIES: [[f64; 6]; 5] = [
    [0.95, 0.95, 0.95, 0.95, 0.95, 0.95],
    [0.05, 0.05, 0.05, 0.05, 0.95, 0.95],
    [0.95, 0.05, 0.05, 0.95, 0.95, 0.95],
    [0.05, 0.05, 0.05, 0.05, 0.05, 0.05],
    [0.95, 0.95, 0.95, 0.95, 0.05, 0.05],
];

pub const COMPONENT_SIZE: usize = 20;

/// Feature probability for component `k`; features past the sixth repeat
/// the sixth.
pub fn feature_probability(k: usize, feature: usize) -> f64 {
    COMPONENT_PROBABILITIES[k][feature.min(5)]
}

/// Five planted components of 20 observations each with `d ∈ {6, 8, 10}`
/// binary features. Observations are laid out component by component.
pub fn generate_bmm(d: usize, seed: u64) -> Result<(FeatureDataset, Partition)> {
    if ![6, 8, 10].contains(&d) {
        return Err(Error::InvalidParameter(format!(
            "feature count must be 6, 8 or 10, got {d}"
        )));
    }
    let k = COMPONENT_PROBABILITIES.len();
    let n = k * COMPONENT_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0u8; n]; d];
    for obs in 0..n {
        let comp = obs / COMPONENT_SIZE;
        for (feature, row) in rows.iter_mut().enumerate() {
            row[obs] = rng.random_bool(feature_probability(comp, feature)) as u8;
        }
    }
    let truth = Partition::from_labels(&(0..n).map(|o| o / COMPONENT_SIZE).collect::<Vec<_>>());
    Ok((FeatureDataset::from_rows(&rows)?, truth))
}

/// `k` planted communities of `size` vertices; each dyad is an edge with
/// probability `p_in` inside a community and `p_out` across.
pub fn planted_network(
    k: usize,
    size: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(NetworkDataset, Partition)> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
        }
    }
    let n = k * size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u / size == v / size { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let truth = Partition::from_labels(&(0..n).map(|o| o / size).collect::<Vec<_>>());
    Ok((NetworkDataset::from_edges(n, &edges)?, truth))
}

/// Parses a whitespace-separated edge list of 1-based vertex pairs. Lines
/// starting with `#` are comments; a comment of the form `# vertices N`
/// declares the vertex count, otherwise the largest index is used. The
/// graph is symmetrised and self-loops are dropped.
pub fn parse_edge_list(text: &str) -> Result<NetworkDataset> {
    let mut declared: Option<usize> = None;
    let mut pairs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("vertices") {
                let v = words.next().and_then(|w| w.parse().ok()).ok_or_else(|| {
                    Error::Data(format!("line {}: malformed vertex count", ln + 1))
                })?;
                declared = Some(v);
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Data(format!("line {}: bad vertex {s:?}", ln + 1))),
            }
        };
        if fields.len() != 2 {
            return Err(Error::Data(format!("line {}: expected two vertices", ln + 1)));
        }
        pairs.push((parse(fields[0])?, parse(fields[1])?));
    }
    let max = pairs.iter().map(|&(u, v)| u.max(v)).max().unwrap_or(0);
    let n = match declared {
        Some(n) if max > n => {
            return Err(Error::Data(format!("vertex {max} outside declared range 1..={n}")));
        }
        Some(n) => n,
        None => max,
    };
    let edges: Vec<_> = pairs.iter().map(|&(u, v)| (u - 1, v - 1)).collect();
    NetworkDataset::from_edges(n, &edges)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkDataset> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}

/// Keeps the `m` vertices that come first when sorted by degree and then
/// label, both descending, and returns the induced subgraph together with
/// the retained original vertices. Retained vertices are renumbered in
/// ascending order of their original labels, which makes the operation
/// idempotent.
pub fn downsample(net: &NetworkDataset, m: usize) -> Result<(NetworkDataset, Vec<usize>)> {
    let n = net.num_vertices();
    if m < 1 || m > n {
        return Err(Error::InvalidParameter(format!("cannot keep {m} of {n} vertices")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| net.degree(b).cmp(&net.degree(a)).then(b.cmp(&a)));
    let mut kept = order[..m].to_vec();
    kept.sort_unstable();
    let mut new_index = vec![usize::MAX; n];
    for (k, &v) in kept.iter().enumerate() {
        new_index[v] = k;
    }
    let edges: Vec<_> = net
        .edges()
        .into_iter()
        .filter(|&(u, v)| new_index[u] != usize::MAX && new_index[v] != usize::MAX)
        .map(|(u, v)| (new_index[u], new_index[v]))
        .collect();
    Ok((NetworkDataset::from_edges(m, &edges)?, kept))
}

/// Vertex count retained at scale `f ∈ (0, 1]`.
pub fn scaled_count(n: usize, f: f64) -> Result<usize> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidParameter(format!("scale {f} outside (0, 1]")));
    }
    Ok(((f * n as f64).round() as usize).clamp(1, n.max(1)))
}

/// The four-vertex graph with edges 1–2, 1–3, 1–4 and 3–4.
pub fn toy_network() -> NetworkDataset {
    NetworkDataset::from_edges(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).expect("static graph")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bmm_shape_and_determinism() {
        let (a, z) = generate_bmm(8, 1).unwrap();
        let (b, _) = generate_bmm(8, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_features(), 8);
        assert_eq!(a.num_observations(), 100);
        assert_eq!(z.num_blocks(), 5);
        assert!(z.blocks().iter().all(|b| b.len() == 20));
        assert!(generate_bmm(7, 1).is_err());
        for f in 6..8 {
            assert_eq!(feature_probability(2, f), feature_probability(2, 5));
        }
    }

    #[test]
    fn quiet_component_density() {
        let (a, _) = generate_bmm(10, 4).unwrap();
        let ones: usize = (60..80)
            .map(|o| a.column(o).iter().map(|&v| v as usize).sum::<usize>())
            .sum();
        let density = ones as f64 / (20.0 * 10.0);
        assert!((density - 0.05).abs() < 0.02, "density {density}");
    }

    #[test]
    fn edge_list_preprocessing() {
        let g = parse_edge_list("# a comment\n1 2\n3 3\n").unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_vertices(), 3);
        assert!(parse_edge_list("1 x\n").is_err());
        assert!(parse_edge_list("1 2 3\n").is_err());
        assert!(parse_edge_list("# vertices 2\n1 3\n").is_err());
        assert_eq!(parse_edge_list(&toy_network().to_edge_list()).unwrap(), toy_network());
    }

    #[test]
    fn downsampling_rules() {
        let g = toy_network();
        let (s, kept) = downsample(&g, 2).unwrap();
        assert_eq!(kept, vec![0, 3]);
        assert_eq!(s.num_edges(), 1);
        let (one, kept) = downsample(&g, 1).unwrap();
        assert_eq!((kept, one.num_edges()), (vec![0], 0));
        let (same, _) = downsample(&g, 4).unwrap();
        assert_eq!(same, g);
        assert!(downsample(&g, 0).is_err() && downsample(&g, 5).is_err());
        let (once, _) = downsample(&g, 3).unwrap();
        let (twice, _) = downsample(&once, 3).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn scale_rounding() {
        assert_eq!(scaled_count(10, 0.8).unwrap(), 8);
        assert_eq!(scaled_count(10, 0.01).unwrap(), 1);
        assert!(scaled_count(10, 0.0).is_err());
    }
}
