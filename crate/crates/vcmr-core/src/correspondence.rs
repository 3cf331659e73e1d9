//! One-to-one correspondence between original-frame and decoded-frame
//! keypoints, and the same/moved/missed/new classification with
//! per-parameter tolerance tests.

use std::collections::HashMap;

use serde::{Serialize, Serializer};

use crate::keypoint::{Keypoint, KeypointSet};

/// Grid-position rule deciding when a matched pair still counts as *same*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SameRule {
    /// At most one sample of displacement in one direction only; a (1,1)
    /// diagonal is already *moved*.
    #[default]
    Literal,
    /// Chebyshev distance at most one; diagonals count as *same*.
    Chebyshev1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Candidate search half-width in samples; 3 spans the 7x7 window.
    pub window_radius: u32,
    /// Relative tolerance for size and response.
    pub tolerance: f64,
    /// Circular tolerance for orientation, degrees.
    pub orientation_tolerance: f64,
    /// Absolute fallback when the reference value is zero.
    pub zero_epsilon: f64,
    pub same_rule: SameRule,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            window_radius: 3,
            tolerance: 0.05,
            orientation_tolerance: 18.0,
            zero_epsilon: 1e-6,
            same_rule: SameRule::Literal,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.window_radius < 1 {
            return Err("window_radius must be >= 1".into());
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err("tolerance must be >= 0".into());
        }
        if !(0.0..=180.0).contains(&self.orientation_tolerance) {
            return Err("orientation_tolerance must be within [0, 180]".into());
        }
        if self.zero_epsilon.is_nan() || self.zero_epsilon <= 0.0 {
            return Err("zero_epsilon must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Same,
    Moved,
    Missed,
    New,
}

/// Bit set over the five keypoint parameters, in wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamMask(u8);

impl ParamMask {
    pub const X: ParamMask = ParamMask(1 << 0);
    pub const Y: ParamMask = ParamMask(1 << 1);
    pub const SIZE: ParamMask = ParamMask(1 << 2);
    pub const ORIENTATION: ParamMask = ParamMask(1 << 3);
    pub const RESPONSE: ParamMask = ParamMask(1 << 4);

    pub const ALL_BITS: u8 = 0b11111;

    pub fn empty() -> Self {
        ParamMask(0)
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::ALL_BITS == 0).then_some(ParamMask(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, other: ParamMask) {
        self.0 |= other.0;
    }

    pub fn contains(self, other: ParamMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Number of set bits, i.e. parameters to transmit.
    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn names(self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for (bit, name) in [
            (Self::X, "x"),
            (Self::Y, "y"),
            (Self::SIZE, "size"),
            (Self::ORIENTATION, "orientation"),
            (Self::RESPONSE, "response"),
        ] {
            if self.contains(bit) {
                names.push(name);
            }
        }
        names
    }
}

impl Serialize for ParamMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.names().serialize(serializer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub orig_index: usize,
    pub dec_index: usize,
    pub category: Category,
    pub param_mask: ParamMask,
}

/// Result of matching one frame pair. Pair indices are unique on each side;
/// `pairs`, `missed` and `new` partition both input sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub missed: Vec<usize>,
    pub new: Vec<usize>,
}

impl MatchReport {
    pub fn count(&self, category: Category) -> usize {
        match category {
            Category::Missed => self.missed.len(),
            Category::New => self.new.len(),
            _ => self
                .pairs
                .iter()
                .filter(|p| p.category == category)
                .count(),
        }
    }
}

#[inline]
fn rounded_displacement(orig: &Keypoint, dec: &Keypoint) -> (i64, i64) {
    (
        dec.x.round() as i64 - orig.x.round() as i64,
        dec.y.round() as i64 - orig.y.round() as i64,
    )
}

/// Classify an accepted pair with the default literal same-rule.
pub fn categorize(orig: &Keypoint, dec: &Keypoint) -> Category {
    categorize_with(SameRule::Literal, orig, dec)
}

pub fn categorize_with(rule: SameRule, orig: &Keypoint, dec: &Keypoint) -> Category {
    let (rx, ry) = rounded_displacement(orig, dec);
    let same = match rule {
        SameRule::Literal => (rx.abs() <= 1 && ry == 0) || (rx == 0 && ry.abs() <= 1),
        SameRule::Chebyshev1 => rx.abs().max(ry.abs()) <= 1,
    };
    if same {
        Category::Same
    } else {
        Category::Moved
    }
}

/// Shortest-arc angular difference in degrees.
pub fn circular_diff_deg(a: f32, b: f32) -> f64 {
    let d = (a as f64 - b as f64).abs() % 360.0;
    d.min(360.0 - d)
}

fn relative_exceeds(reference: f32, value: f32, tolerance: f64, zero_epsilon: f64) -> bool {
    let denom = (reference.abs() as f64).max(zero_epsilon);
    (value as f64 - reference as f64).abs() / denom > tolerance
}

/// Parameters that must be transmitted for a matched pair. Position bits
/// follow the category (a *same* pair keeps its sub-sample displacement);
/// the remaining three follow the configured tolerances.
pub fn param_deltas(
    orig: &Keypoint,
    dec: &Keypoint,
    category: Category,
    cfg: &MatchConfig,
) -> ParamMask {
    let mut mask = ParamMask::empty();
    if category == Category::Moved {
        mask.insert(ParamMask::X);
        mask.insert(ParamMask::Y);
    }
    if relative_exceeds(orig.size, dec.size, cfg.tolerance, cfg.zero_epsilon) {
        mask.insert(ParamMask::SIZE);
    }
    if circular_diff_deg(orig.orientation, dec.orientation) > cfg.orientation_tolerance {
        mask.insert(ParamMask::ORIENTATION);
    }
    if relative_exceeds(orig.response, dec.response, cfg.tolerance, cfg.zero_epsilon) {
        mask.insert(ParamMask::RESPONSE);
    }
    mask
}

/// Bits for every parameter that differs exactly; the lossless mask.
pub fn exact_param_mask(orig: &Keypoint, dec: &Keypoint) -> ParamMask {
    let mut mask = ParamMask::empty();
    if orig.x != dec.x {
        mask.insert(ParamMask::X);
    }
    if orig.y != dec.y {
        mask.insert(ParamMask::Y);
    }
    if orig.size != dec.size {
        mask.insert(ParamMask::SIZE);
    }
    if orig.orientation != dec.orientation {
        mask.insert(ParamMask::ORIENTATION);
    }
    if orig.response != dec.response {
        mask.insert(ParamMask::RESPONSE);
    }
    mask
}

/// One-to-one matching within the rounded Chebyshev window, by exact
/// minimum-total-cost assignment at maximum cardinality. Candidate cost is
/// squared Euclidean distance on fractional positions; among equal-cost
/// optima the result is fixed by a deterministic edge preference on
/// (cost, |size delta|, |response delta|, indices). Canonical input order
/// makes the outcome independent of how either set was assembled.
pub fn match_sets(orig: &KeypointSet, dec: &KeypointSet, cfg: &MatchConfig) -> MatchReport {
    debug_assert!(cfg.validate().is_ok());
    let radius = cfg.window_radius as i64;

    // Bucket decoded keypoints by rounded grid cell; cells are only probed
    // by key, never iterated, so ordering stays deterministic.
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, kp) in dec.keypoints.iter().enumerate() {
        cells
            .entry((kp.x.round() as i64, kp.y.round() as i64))
            .or_default()
            .push(j);
    }

    let mut adjacency: Vec<Vec<CandidateEdge>> = vec![Vec::new(); orig.len()];
    for (i, okp) in orig.keypoints.iter().enumerate() {
        let cx = okp.x.round() as i64;
        let cy = okp.y.round() as i64;
        for gy in cy - radius..=cy + radius {
            for gx in cx - radius..=cx + radius {
                let Some(bucket) = cells.get(&(gx, gy)) else {
                    continue;
                };
                for &j in bucket {
                    let dkp = &dec.keypoints[j];
                    let dx = dkp.x as f64 - okp.x as f64;
                    let dy = dkp.y as f64 - okp.y as f64;
                    adjacency[i].push(CandidateEdge {
                        cost: dx * dx + dy * dy,
                        dsize: (dkp.size as f64 - okp.size as f64).abs(),
                        dresponse: (dkp.response as f64 - okp.response as f64).abs(),
                        dec: j,
                    });
                }
            }
        }
        adjacency[i].sort_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then(a.dsize.total_cmp(&b.dsize))
                .then(a.dresponse.total_cmp(&b.dresponse))
                .then(a.dec.cmp(&b.dec))
        });
    }

    let match_of_orig = assign_min_cost(orig.len(), dec.len(), &adjacency);

    let mut dec_taken = vec![false; dec.len()];
    let mut pairs = Vec::new();
    for (i, matched) in match_of_orig.iter().enumerate() {
        let Some(j) = *matched else { continue };
        dec_taken[j] = true;
        let okp = &orig.keypoints[i];
        let dkp = &dec.keypoints[j];
        let category = categorize_with(cfg.same_rule, okp, dkp);
        pairs.push(MatchedPair {
            orig_index: i,
            dec_index: j,
            category,
            param_mask: param_deltas(okp, dkp, category, cfg),
        });
    }

    let missed = (0..orig.len())
        .filter(|&i| match_of_orig[i].is_none())
        .collect();
    let new = (0..dec.len()).filter(|&j| !dec_taken[j]).collect();
    MatchReport { pairs, missed, new }
}

#[derive(Clone)]
struct CandidateEdge {
    cost: f64,
    dsize: f64,
    dresponse: f64,
    dec: usize,
}

/// Minimum-cost maximum-cardinality assignment by successive shortest
/// augmenting paths, solved per connected component of the candidate graph.
/// Components of real frame pairs are tiny (a handful of keypoints inside a
/// shared window), so plain Bellman-Ford relaxation is both simple and fast.
fn assign_min_cost(
    n_orig: usize,
    n_dec: usize,
    adjacency: &[Vec<CandidateEdge>],
) -> Vec<Option<usize>> {
    let mut match_of_orig: Vec<Option<usize>> = vec![None; n_orig];
    let mut match_of_dec: Vec<Option<usize>> = vec![None; n_dec];

    let mut origs_of_dec: Vec<Vec<usize>> = vec![Vec::new(); n_dec];
    for (i, adj) in adjacency.iter().enumerate() {
        for edge in adj {
            origs_of_dec[edge.dec].push(i);
        }
    }

    // Connected components over the bipartite candidate graph.
    let mut visited_orig = vec![false; n_orig];
    let mut visited_dec = vec![false; n_dec];
    for start in 0..n_orig {
        if visited_orig[start] || adjacency[start].is_empty() {
            continue;
        }
        let mut members = Vec::new();
        let mut stack = vec![start];
        visited_orig[start] = true;
        while let Some(i) = stack.pop() {
            members.push(i);
            for edge in &adjacency[i] {
                if !visited_dec[edge.dec] {
                    visited_dec[edge.dec] = true;
                    for &other in &origs_of_dec[edge.dec] {
                        if !visited_orig[other] {
                            visited_orig[other] = true;
                            stack.push(other);
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        augment_component(&members, adjacency, &mut match_of_orig, &mut match_of_dec);
    }
    match_of_orig
}

/// Repeatedly find the cheapest augmenting path inside one component and
/// apply it; stops when no free-to-free path remains. With non-negative
/// edge costs this yields the minimum-cost flow at every cardinality, hence
/// a min-cost maximum matching.
fn augment_component(
    members: &[usize],
    adjacency: &[Vec<CandidateEdge>],
    match_of_orig: &mut [Option<usize>],
    match_of_dec: &mut [Option<usize>],
) {
    // local dec index mapping, in first-seen order of the sorted members
    let mut dec_nodes: Vec<usize> = Vec::new();
    let mut local_of_dec: HashMap<usize, usize> = HashMap::new();
    for &i in members {
        for edge in &adjacency[i] {
            local_of_dec.entry(edge.dec).or_insert_with(|| {
                dec_nodes.push(edge.dec);
                dec_nodes.len() - 1
            });
        }
    }
    let n_left = members.len();
    let n_right = dec_nodes.len();

    loop {
        // Bellman-Ford over the residual graph: free lefts are sources.
        const UNREACHED: f64 = f64::INFINITY;
        let mut dist_left = vec![UNREACHED; n_left];
        let mut dist_right = vec![UNREACHED; n_right];
        let mut pred_right: Vec<Option<usize>> = vec![None; n_right]; // local left
        for (li, &i) in members.iter().enumerate() {
            if match_of_orig[i].is_none() {
                dist_left[li] = 0.0;
            }
        }
        // Relax to fixpoint; shortest paths settle within node-count rounds
        // because an optimal partial matching leaves no negative cycles.
        let mut rounds = 0usize;
        let mut changed = true;
        while changed {
            changed = false;
            rounds += 1;
            assert!(
                rounds <= n_left + n_right + 2,
                "augmenting-path search failed to settle"
            );
            for (li, &i) in members.iter().enumerate() {
                if dist_left[li] == UNREACHED {
                    continue;
                }
                for edge in &adjacency[i] {
                    if match_of_orig[i] == Some(edge.dec) {
                        continue; // matched edges are traversed right-to-left
                    }
                    let ri = local_of_dec[&edge.dec];
                    let cand = dist_left[li] + edge.cost;
                    if cand < dist_right[ri] {
                        dist_right[ri] = cand;
                        pred_right[ri] = Some(li);
                        changed = true;
                        // relax the matched back-edge of this right node
                        if let Some(owner) = match_of_dec[edge.dec] {
                            let owner_local = members
                                .binary_search(&owner)
                                .expect("owner is in the same component");
                            let back = adjacency[owner]
                                .iter()
                                .find(|e| e.dec == edge.dec)
                                .expect("matched edge exists");
                            let through = cand - back.cost;
                            if through < dist_left[owner_local] {
                                dist_left[owner_local] = through;
                            }
                        }
                    }
                }
            }
        }

        // cheapest free right node
        let mut target: Option<usize> = None;
        for (ri, &j) in dec_nodes.iter().enumerate() {
            if match_of_dec[j].is_none()
                && dist_right[ri] < UNREACHED
                && target.is_none_or(|t| dist_right[ri] < dist_right[t])
            {
                target = Some(ri);
            }
        }
        let Some(mut ri) = target else {
            return;
        };

        // flip the augmenting path
        loop {
            let li = pred_right[ri].expect("augmenting path is connected");
            let i = members[li];
            let j = dec_nodes[ri];
            let previous = match_of_orig[i];
            match_of_orig[i] = Some(j);
            match_of_dec[j] = Some(i);
            match previous {
                None => break,
                Some(prev_j) => {
                    ri = local_of_dec[&prev_j];
                    // prev_j lost its partner; the next hop rematches it
                    match_of_dec[prev_j] = None;
                }
            }
        }
    }
}

/// Counts of matched pairs of `filter` category by their number of
/// unchanged parameters (5 minus the mask population).
pub fn unchanged_param_histogram(report: &MatchReport, filter: Category) -> [u64; 6] {
    let mut hist = [0u64; 6];
    for pair in &report.pairs {
        if pair.category == filter {
            hist[5 - pair.param_mask.count() as usize] += 1;
        }
    }
    hist
}
