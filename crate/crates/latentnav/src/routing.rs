//! Routes over training frames and route-quality statistics.
//!
//! A route is an ordered list of frame indices matched to a latent path:
//! each path point decodes to an image and is assigned the training frame
//! with the smallest squared pixel distance (ties go to the lower index).
//! Evaluation compares routes on distinct-frame counts, neighbor-versus-
//! random distance gaps, neighbor-distance histograms, and — for generated
//! worlds — the largest ground-truth ring gap between consecutive frames.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::planner::{Decoder, LatentPath};
use crate::rng::{mix, SplitMix64};
use crate::vae::{encode, ModelParams};
use crate::world::{Provenance, TourDataset};

/// How a route was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteSource {
    Geodesic,
    Manual,
    Oracle,
}

/// Ordered frame indices into one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    indices: Vec<usize>,
    source: RouteSource,
}

impl Route {
    pub fn new(indices: Vec<usize>, source: RouteSource, dataset: &TourDataset) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::config("route", "must hold at least one frame"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::config(
                "route",
                format!("frame index {bad} out of range for {} frames", dataset.len()),
            ));
        }
        Ok(Route { indices, source })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn source(&self) -> RouteSource {
        self.source
    }

    /// Resolves the route against its dataset.
    pub fn images<'a>(&self, dataset: &'a TourDataset) -> Vec<&'a crate::image::Image> {
        self.indices.iter().map(|&i| dataset.image(i)).collect()
    }
}

/// Matches every path point to the dataset frame minimizing the squared
/// pixel distance to its decoded image; ties break to the lower index.
pub fn match_route(path: &LatentPath, decoder: &dyn Decoder, dataset: &TourDataset) -> Result<Route> {
    if dataset.is_empty() {
        return Err(Error::config("dataset", "must be nonempty"));
    }
    let pixel_count = dataset.image(0).pixel_count();
    if decoder.image_dim() != pixel_count {
        return Err(Error::config(
            "decoder",
            format!(
                "decoder emits {} values but frames have {pixel_count} pixels",
                decoder.image_dim()
            ),
        ));
    }
    if decoder.latent_dim() != path.dim() {
        return Err(Error::config(
            "decoder",
            format!(
                "decoder latent dim {} does not match path dim {}",
                decoder.latent_dim(),
                path.dim()
            ),
        ));
    }

    let mut indices = Vec::with_capacity(path.len());
    for z in path.points() {
        let decoded = decoder.decode(z);
        let mut best = 0usize;
        let mut best_distance = f64::INFINITY;
        for (i, frame) in dataset.frames.iter().enumerate() {
            let d: f64 = decoded
                .iter()
                .zip(frame.image.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_distance {
                best_distance = d;
                best = i;
            }
        }
        indices.push(best);
    }
    Route::new(indices, RouteSource::Geodesic, dataset)
}

/// Encodes each route frame and strings the posterior means into a path
/// (the latent-space counterpart of a hand-picked route).
pub fn path_from_route(
    route: &Route,
    params: &ModelParams,
    dataset: &TourDataset,
) -> Result<LatentPath> {
    let mut points = Vec::with_capacity(route.len());
    for &i in route.indices() {
        let posterior = encode(params, dataset.image(i))?;
        points.push(posterior.mu);
    }
    LatentPath::from_points(points)
}

/// Number of distinct frames in the route, over its total length.
pub fn category_count(route: &Route) -> (usize, usize) {
    let mut seen: Vec<usize> = route.indices().to_vec();
    seen.sort_unstable();
    seen.dedup();
    (seen.len(), route.len())
}

/// Per position `i`: `d(v_i, v_i+1) - d(v_i, v_random)`, with the random
/// reference drawn fresh (seeded) from `reference` for each comparison.
/// Negative values mean consecutive entries are closer than random pairs.
pub fn neighbor_random_diffs(
    sequence: &[Vec<f64>],
    reference: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<f64>> {
    if sequence.len() < 2 {
        return Err(Error::config("sequence", "need at least 2 entries"));
    }
    if reference.is_empty() {
        return Err(Error::config("reference", "must be nonempty"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut diffs = Vec::with_capacity(sequence.len() - 1);
    for window in sequence.windows(2) {
        let neighbor = euclidean(&window[0], &window[1]);
        let pick = &reference[rng.next_index(reference.len())];
        let random = euclidean(&window[0], pick);
        diffs.push(neighbor - random);
    }
    Ok(diffs)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Uniform-width histogram with reported edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges over `[0, max distance]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram of consecutive distances in a sequence, over `[0, max]` with
/// `bins` equal bins. Counts sum to `n - 1`.
pub fn neighbor_distance_hist(sequence: &[Vec<f64>], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::config("bins", "need at least 1 bin"));
    }
    if sequence.len() < 2 {
        return Err(Error::config("sequence", "need at least 2 entries"));
    }
    let distances: Vec<f64> = sequence
        .windows(2)
        .map(|w| euclidean(&w[0], &w[1]))
        .collect();
    let max = distances.iter().cloned().fold(0.0f64, f64::max);
    let edges: Vec<f64> = (0..=bins).map(|b| max * b as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &d in &distances {
        let bin = if max > 0.0 {
            (((d / max) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Ring distance `min(|dp|, 1 - |dp|)` between two tour positions.
pub fn ring_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Largest ground-truth ring gap between consecutive route frames. Only
/// defined for generated datasets, whose positions are ground truth.
pub fn continuity_gap(route: &Route, dataset: &TourDataset) -> Result<f64> {
    if dataset.provenance != Provenance::Generated {
        return Err(Error::config(
            "dataset",
            "no ground truth: positions of an ingested dataset are ordinal only",
        ));
    }
    let positions: Vec<f64> = route
        .indices()
        .iter()
        .map(|&i| dataset.frames[i].position)
        .collect();
    Ok(positions
        .windows(2)
        .map(|w| ring_distance(w[0], w[1]))
        .fold(0.0, f64::max))
}

/// Distinct / total frames, with the ratio rendered as `"d/n"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryCount {
    pub distinct: usize,
    pub total: usize,
    pub ratio: String,
}

/// Every statistic computed for one route and its latent path.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub name: String,
    pub source: RouteSource,
    pub category: CategoryCount,
    /// `d(neighbor) - d(random)` per route step, in image space.
    pub image_neighbor_random_diffs: Vec<f64>,
    /// Same, between posterior means in latent space.
    pub latent_neighbor_random_diffs: Vec<f64>,
    pub image_neighbor_hist: Histogram,
    pub latent_neighbor_hist: Histogram,
    /// Present only for generated datasets.
    pub max_geo_gap: Option<f64>,
}

/// Evaluates one route against its dataset and encoder.
///
/// Image-space statistics use the route frames' pixels with all training
/// frames as the random reference; latent-space statistics use posterior
/// means on both sides. The two random streams are derived from `seed` and
/// `mix(seed)` respectively.
pub fn evaluate_route(
    name: &str,
    route: &Route,
    dataset: &TourDataset,
    params: &ModelParams,
    bins: usize,
    seed: u64,
) -> Result<EvalReport> {
    if route.len() < 2 {
        return Err(Error::config("route", "evaluation needs at least 2 frames"));
    }
    let (distinct, total) = category_count(route);

    let route_images: Vec<Vec<f64>> = route
        .indices()
        .iter()
        .map(|&i| dataset.image(i).data().to_vec())
        .collect();
    let all_images: Vec<Vec<f64>> = dataset
        .frames
        .iter()
        .map(|f| f.image.data().to_vec())
        .collect();

    let path = path_from_route(route, params, dataset)?;
    let route_latents: Vec<Vec<f64>> = path.points().to_vec();
    let all_latents: Vec<Vec<f64>> = dataset
        .frames
        .iter()
        .map(|f| encode(params, &f.image).map(|p| p.mu))
        .collect::<Result<_>>()?;

    let max_geo_gap = match dataset.provenance {
        Provenance::Generated => Some(continuity_gap(route, dataset)?),
        Provenance::Ingested => None,
    };

    Ok(EvalReport {
        name: name.to_string(),
        source: route.source(),
        category: CategoryCount {
            distinct,
            total,
            ratio: format!("{distinct}/{total}"),
        },
        image_neighbor_random_diffs: neighbor_random_diffs(&route_images, &all_images, seed)?,
        latent_neighbor_random_diffs: neighbor_random_diffs(
            &route_latents,
            &all_latents,
            mix(seed),
        )?,
        image_neighbor_hist: neighbor_distance_hist(&route_images, bins)?,
        latent_neighbor_hist: neighbor_distance_hist(&route_latents, bins)?,
        max_geo_gap,
    })
}

/// Writes a route as text: `# route v1 n=<n>`, then one frame index per line.
pub fn save_route(route: &Route, file: &Path) -> Result<()> {
    let mut text = format!("# route v1 n={}\n", route.len());
    for &i in route.indices() {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    crate::fsio::write_atomic(file, text.as_bytes())
}

pub fn load_route(file: &Path, source: RouteSource, dataset: &TourDataset) -> Result<Route> {
    let name = file.display().to_string();
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(name.clone(), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::malformed(&name, "empty file"))?;
    let n: usize = header
        .strip_prefix("# route v1 n=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::BadMagic {
            path: name.clone(),
            expected: "# route v1 n=<n>".to_string(),
        })?;
    let indices: Vec<usize> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::malformed(&name, format!("unparseable index {l:?}")))
        })
        .collect::<Result<_>>()?;
    if indices.len() != n {
        return Err(Error::malformed(
            &name,
            format!("header declares {n} indices, found {}", indices.len()),
        ));
    }
    Route::new(indices, source, dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::{Likelihood, ModelConfig};
    use crate::world::{generate_tour, WorldConfig};

    fn tiny_world() -> TourDataset {
        generate_tour(&WorldConfig {
            num_rooms: 2,
            frames: 16,
            image_height: 4,
            image_width: 4,
            channels: 1,
            transition_width: 0.0,
            alias_pairs: Vec::new(),
            seed: 3,
        })
        .unwrap()
    }

    fn tiny_params(dataset: &TourDataset) -> ModelParams {
        ModelParams::init(
            ModelConfig {
                latent_dim: 2,
                image_height: dataset.image_height(),
                image_width: dataset.image_width(),
                channels: dataset.channels(),
                encoder_hidden: vec![6],
                decoder_hidden: vec![6],
                likelihood: Likelihood::GaussianUnitVariance,
            },
            9,
        )
        .unwrap()
    }

    /// Decoder whose image space is the dataset's pixel space but whose
    /// latent is the raw pixel vector (identity): handy for exact matching.
    struct PixelDecoder {
        dim: usize,
    }

    impl Decoder for PixelDecoder {
        fn latent_dim(&self) -> usize {
            self.dim
        }
        fn image_dim(&self) -> usize {
            self.dim
        }
        fn decode(&self, z: &[f64]) -> Vec<f64> {
            z.to_vec()
        }
        fn decode_vjp(&self, _z: &[f64], c: &[f64]) -> Vec<f64> {
            c.to_vec()
        }
    }

    #[test]
    fn exact_frame_match_returns_its_index() {
        let ds = tiny_world();
        let dim = ds.image(0).pixel_count();
        let path =
            LatentPath::from_points(vec![ds.image(3).data().to_vec()]).unwrap();
        let route = match_route(&path, &PixelDecoder { dim }, &ds).unwrap();
        assert_eq!(route.indices(), &[3]);
    }

    #[test]
    fn ties_break_to_the_lower_index() {
        let mut ds = tiny_world();
        // Duplicate frame 5's pixels into frame 11: matching either is a tie.
        ds.frames[11].image = ds.frames[5].image.clone();
        let dim = ds.image(0).pixel_count();
        let path = LatentPath::from_points(vec![ds.image(11).data().to_vec()]).unwrap();
        let route = match_route(&path, &PixelDecoder { dim }, &ds).unwrap();
        assert_eq!(route.indices(), &[5]);
    }

    #[test]
    fn matching_agrees_with_exhaustive_scan() {
        let ds = tiny_world();
        let dim = ds.image(0).pixel_count();
        let mut rng = SplitMix64::new(41);
        let points: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..dim).map(|_| rng.next_f64()).collect())
            .collect();
        let path = LatentPath::from_points(points.clone()).unwrap();
        let route = match_route(&path, &PixelDecoder { dim }, &ds).unwrap();

        for (point, &got) in points.iter().zip(route.indices()) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, frame) in ds.frames.iter().enumerate() {
                let d: f64 = point
                    .iter()
                    .zip(frame.image.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            assert_eq!(got, best);
        }
    }

    #[test]
    fn path_from_route_is_per_frame_encoding() {
        let ds = tiny_world();
        let params = tiny_params(&ds);
        let route = Route::new(vec![4], RouteSource::Manual, &ds).unwrap();
        let path = path_from_route(&route, &params, &ds).unwrap();
        assert_eq!(path.len(), 1);
        let direct = encode(&params, ds.image(4)).unwrap();
        assert_eq!(path.points()[0], direct.mu);

        let longer = Route::new(vec![0, 7, 7, 12], RouteSource::Manual, &ds).unwrap();
        let path = path_from_route(&longer, &params, &ds).unwrap();
        assert_eq!(path.len(), 4);
        for (&i, point) in longer.indices().iter().zip(path.points()) {
            // Definitional oracle: encode each frame independently.
            let expected = encode(&params, ds.image(i)).unwrap().mu;
            assert_eq!(point, &expected);
        }
    }

    #[test]
    fn category_count_examples() {
        let ds = tiny_world();
        let r = Route::new(vec![3, 3, 3, 7], RouteSource::Manual, &ds).unwrap();
        assert_eq!(category_count(&r), (2, 4));

        let distinct = Route::new((0..16).collect(), RouteSource::Manual, &ds).unwrap();
        assert_eq!(category_count(&distinct), (16, 16));
    }

    #[test]
    fn distinct_count_bounds_hold_for_random_routes() {
        let ds = tiny_world();
        let mut rng = SplitMix64::new(61);
        for _ in 0..100 {
            let len = 1 + rng.next_index(30);
            let indices: Vec<usize> = (0..len).map(|_| rng.next_index(ds.len())).collect();
            let has_repeat = {
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                sorted.windows(2).any(|w| w[0] == w[1])
            };
            let route = Route::new(indices, RouteSource::Manual, &ds).unwrap();
            let (distinct, total) = category_count(&route);
            assert!(distinct >= 1 && distinct <= total);
            assert_eq!(distinct == total, !has_repeat);
        }
    }

    #[test]
    fn neighbor_random_diffs_properties() {
        let seq: Vec<Vec<f64>> = vec![vec![1.0, 0.0]; 5];
        let reference: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let diffs = neighbor_random_diffs(&seq, &reference, 17).unwrap();
        assert_eq!(diffs.len(), 4);
        // Neighbors are identical, so every diff is -d(v, random) <= 0.
        assert!(diffs.iter().all(|&d| d <= 0.0));

        let again = neighbor_random_diffs(&seq, &reference, 17).unwrap();
        assert_eq!(diffs, again);

        // Brute-force oracle with the same stream.
        let mut rng = SplitMix64::new(17);
        for (i, &d) in diffs.iter().enumerate() {
            let pick = &reference[rng.next_index(reference.len())];
            let expected = euclidean(&seq[i], &seq[i + 1]) - euclidean(&seq[i], pick);
            assert_eq!(d, expected);
        }
    }

    #[test]
    fn histogram_examples_and_oracle() {
        let constant: Vec<Vec<f64>> = vec![vec![2.0]; 6];
        let h = neighbor_distance_hist(&constant, 4).unwrap();
        assert_eq!(h.counts, vec![5, 0, 0, 0]);

        let pair = vec![vec![0.0], vec![1.0]];
        let h = neighbor_distance_hist(&pair, 1).unwrap();
        assert_eq!(h.counts, vec![1]);
        assert_eq!(h.edges, vec![0.0, 1.0]);

        let mut rng = SplitMix64::new(23);
        let seq: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)])
            .collect();
        let bins = 7;
        let h = neighbor_distance_hist(&seq, bins).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 19);

        // Brute-force binning oracle.
        let distances: Vec<f64> = seq.windows(2).map(|w| euclidean(&w[0], &w[1])).collect();
        let max = distances.iter().cloned().fold(0.0f64, f64::max);
        let mut expected = vec![0usize; bins];
        for d in distances {
            let mut bin = ((d / max) * bins as f64) as usize;
            if bin == bins {
                bin -= 1;
            }
            expected[bin] += 1;
        }
        assert_eq!(h.counts, expected);
    }

    #[test]
    fn continuity_gap_hand_values() {
        let mut ds = tiny_world();
        ds.frames[0].position = 0.10;
        ds.frames[1].position = 0.12;
        ds.frames[2].position = 0.13;
        let r = Route::new(vec![0, 1, 2], RouteSource::Manual, &ds).unwrap();
        assert!((continuity_gap(&r, &ds).unwrap() - 0.02).abs() < 1e-12);

        ds.frames[3].position = 0.98;
        ds.frames[4].position = 0.02;
        let wrap = Route::new(vec![3, 4], RouteSource::Manual, &ds).unwrap();
        assert!((continuity_gap(&wrap, &ds).unwrap() - 0.04).abs() < 1e-12);

        let single = Route::new(vec![2], RouteSource::Manual, &ds).unwrap();
        assert_eq!(continuity_gap(&single, &ds).unwrap(), 0.0);

        // Reversal invariance.
        let fwd = Route::new(vec![0, 1, 2, 3], RouteSource::Manual, &ds).unwrap();
        let rev = Route::new(vec![3, 2, 1, 0], RouteSource::Manual, &ds).unwrap();
        assert_eq!(
            continuity_gap(&fwd, &ds).unwrap(),
            continuity_gap(&rev, &ds).unwrap()
        );
    }

    #[test]
    fn continuity_gap_requires_ground_truth() {
        let mut ds = tiny_world();
        ds.provenance = Provenance::Ingested;
        let r = Route::new(vec![0, 1], RouteSource::Manual, &ds).unwrap();
        let err = continuity_gap(&r, &ds).unwrap_err();
        assert!(err.to_string().contains("no ground truth"), "{err}");
    }

    #[test]
    fn evaluate_route_is_deterministic_and_consistent() {
        let ds = tiny_world();
        let params = tiny_params(&ds);
        let route = Route::new(vec![0, 2, 2, 9, 14], RouteSource::Oracle, &ds).unwrap();
        let a = evaluate_route("test", &route, &ds, &params, 5, 31).unwrap();
        let b = evaluate_route("test", &route, &ds, &params, 5, 31).unwrap();
        assert_eq!(a.image_neighbor_random_diffs, b.image_neighbor_random_diffs);
        assert_eq!(a.latent_neighbor_random_diffs, b.latent_neighbor_random_diffs);
        assert_eq!(a.category.ratio, "4/5");
        assert_eq!(a.image_neighbor_hist.counts.iter().sum::<usize>(), 4);
        assert!(a.max_geo_gap.is_some());

        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"ratio\":\"4/5\""));
    }

    #[test]
    fn route_file_round_trip_and_bad_header() {
        let ds = tiny_world();
        let route = Route::new(vec![1, 1, 8, 3], RouteSource::Geodesic, &ds).unwrap();
        let dir =
            std::env::temp_dir().join(format!("latentnav-route-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("r.txt");
        save_route(&route, &file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("# route v1 n=4\n"));
        let back = load_route(&file, RouteSource::Geodesic, &ds).unwrap();
        assert_eq!(back.indices(), route.indices());

        std::fs::write(&file, "not a route\n").unwrap();
        assert!(load_route(&file, RouteSource::Manual, &ds).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }


}
