//! State space geometry: axis-aligned boxes partitioning the positive
//! orthant, the grid refinement, component lookup, corners and unbounded
//! dimensions.
//!
//! A valid partition satisfies three conditions: its boxes cover the orthant,
//! they are pairwise disjoint, and within each box every state has the same
//! set of admissible nearest-neighbor steps. The last condition is what makes
//! a per-component transition law well defined.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// A lattice point in the orthant, one coordinate per dimension.
pub type State = Vec<i64>;

/// A transition step; entries in `{-1, 0, 1}` for walk steps, up to
/// `{-2, ..., 2}` for the node offsets of flow problems.
pub type Step = Vec<i64>;

/// Axis-aligned box of lattice points: `n` is a member iff
/// `lower[i] <= n[i] <= upper[i]` for every dimension (`None` = unbounded).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeBox {
    lower: Vec<i64>,
    upper: Vec<Option<i64>>,
}

/// Construction errors for [`LatticeBox`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoxError {
    DimensionMismatch { lower: usize, upper: usize },
    NegativeLower { dim: usize, value: i64 },
    EmptyInterval { dim: usize, lower: i64, upper: i64 },
}

impl fmt::Display for BoxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxError::DimensionMismatch { lower, upper } => {
                write!(f, "lower has {lower} entries but upper has {upper}")
            }
            BoxError::NegativeLower { dim, value } => {
                write!(f, "lower bound {value} in dimension {dim} is negative")
            }
            BoxError::EmptyInterval { dim, lower, upper } => {
                write!(f, "empty interval [{lower},{upper}] in dimension {dim}")
            }
        }
    }
}

impl core::error::Error for BoxError {}

impl LatticeBox {
    pub fn new(lower: Vec<i64>, upper: Vec<Option<i64>>) -> Result<Self, BoxError> {
        if lower.len() != upper.len() {
            return Err(BoxError::DimensionMismatch {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        for (i, (&lo, &up)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo < 0 {
                return Err(BoxError::NegativeLower { dim: i, value: lo });
            }
            if let Some(up) = up {
                if up < lo {
                    return Err(BoxError::EmptyInterval {
                        dim: i,
                        lower: lo,
                        upper: up,
                    });
                }
            }
        }
        Ok(LatticeBox { lower, upper })
    }

    /// Bounded box helper for tests and model construction.
    pub fn bounded(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self, BoxError> {
        let upper = upper.into_iter().map(Some).collect();
        LatticeBox::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[Option<i64>] {
        &self.upper
    }

    pub fn contains(&self, n: &[i64]) -> bool {
        if n.len() != self.dim() {
            return false;
        }
        self.lower
            .iter()
            .zip(self.upper.iter())
            .zip(n.iter())
            .all(|((&lo, &up), &x)| x >= lo && up.map_or(true, |u| x <= u))
    }

    /// Dimensions in which the box extends to infinity.
    pub fn unbounded_dims(&self) -> Vec<usize> {
        self.upper
            .iter()
            .enumerate()
            .filter_map(|(i, u)| u.is_none().then_some(i))
            .collect()
    }

    /// Corner states: lower bound on unbounded dimensions, both endpoints on
    /// bounded ones. At most `2^M`, listed in lexicographic order.
    pub fn corners(&self) -> Vec<State> {
        let choices: Vec<Vec<i64>> = self
            .lower
            .iter()
            .zip(self.upper.iter())
            .map(|(&lo, &up)| match up {
                Some(u) if u > lo => vec![lo, u],
                _ => vec![lo],
            })
            .collect();
        let mut out = Vec::new();
        let mut current = vec![0i64; self.dim()];
        cartesian(&choices, 0, &mut current, &mut out);
        out
    }

    /// The admissible nearest-neighbor steps shared by every state of the box,
    /// assuming the box passes the neighborhood-constancy check: dimension `i`
    /// admits `-1` iff `lower[i] >= 1`.
    pub fn neighborhood(&self) -> Vec<Step> {
        let choices: Vec<Vec<i64>> = self
            .lower
            .iter()
            .map(|&lo| if lo >= 1 { vec![-1, 0, 1] } else { vec![0, 1] })
            .collect();
        let mut out = Vec::new();
        let mut current = vec![0i64; self.dim()];
        cartesian(&choices, 0, &mut current, &mut out);
        out
    }

    /// Box shifted by a step; the result may leave the orthant, so this is
    /// only for geometry queries, not for constructing partitions.
    pub(crate) fn shifted(&self, d: &[i64]) -> LatticeBox {
        LatticeBox {
            lower: self.lower.iter().zip(d.iter()).map(|(&l, &s)| l + s).collect(),
            upper: self
                .upper
                .iter()
                .zip(d.iter())
                .map(|(&u, &s)| u.map(|x| x + s))
                .collect(),
        }
    }

    pub(crate) fn intersects(&self, other: &LatticeBox) -> bool {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .zip(other.lower.iter().zip(other.upper.iter()))
            .all(|((&lo_a, &up_a), (&lo_b, &up_b))| {
                let hi_ok_a = up_a.map_or(true, |u| u >= lo_b);
                let hi_ok_b = up_b.map_or(true, |u| u >= lo_a);
                hi_ok_a && hi_ok_b
            })
    }
}

impl fmt::Display for LatticeBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (&lo, &up)) in self.lower.iter().zip(self.upper.iter()).enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            match up {
                Some(u) if u == lo => write!(f, "{{{lo}}}")?,
                Some(u) => write!(f, "[{lo},{u}]")?,
                None => write!(f, "[{lo},inf)")?,
            }
        }
        Ok(())
    }
}

fn cartesian(choices: &[Vec<i64>], dim: usize, current: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    if dim == choices.len() {
        out.push(current.clone());
        return;
    }
    for &v in &choices[dim] {
        current[dim] = v;
        cartesian(choices, dim + 1, current, out);
    }
}

/// Validation errors for [`validate_partition`], one per partition condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionError {
    NoBoxes,
    BadBox { index: usize, error: BoxError },
    WrongDimension { index: usize, expected: usize, found: usize },
    /// Two boxes share a state.
    Overlap { first: usize, second: usize },
    /// A state covered by no box; `witness` is one such state.
    CoverageGap { witness: State },
    /// A box contains states with different neighborhood sets: dimension `dim`
    /// holds both `n_i = 0` and `n_i >= 1`.
    MixedNeighborhood { index: usize, dim: usize },
}

impl fmt::Display for PartitionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionError::NoBoxes => write!(f, "partition needs at least one box"),
            PartitionError::BadBox { index, error } => write!(f, "box {index}: {error}"),
            PartitionError::WrongDimension {
                index,
                expected,
                found,
            } => write!(f, "box {index} has dimension {found}, expected {expected}"),
            PartitionError::Overlap { first, second } => {
                write!(f, "boxes {first} and {second} overlap")
            }
            PartitionError::CoverageGap { witness } => {
                write!(f, "state {witness:?} is not covered by any box")
            }
            PartitionError::MixedNeighborhood { index, dim } => write!(
                f,
                "box {index} mixes boundary and interior states in dimension {dim}"
            ),
        }
    }
}

impl core::error::Error for PartitionError {}

/// A validated partition of the orthant into neighborhood-constant boxes.
///
/// Component indices follow input order. The per-component neighborhood sets
/// are precomputed in lexicographic step order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    dim: usize,
    components: Vec<LatticeBox>,
    neighborhoods: Vec<Vec<Step>>,
}

impl Partition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, k: usize) -> &LatticeBox {
        &self.components[k]
    }

    pub fn components(&self) -> &[LatticeBox] {
        &self.components
    }

    /// `N_k`: admissible steps from any state of component `k`.
    pub fn neighborhood(&self, k: usize) -> &[Step] {
        &self.neighborhoods[k]
    }

    /// Index of the unique component containing `n`.
    ///
    /// `n` must lie in the orthant; coverage is a partition invariant.
    pub fn locate(&self, n: &[i64]) -> usize {
        self.components
            .iter()
            .position(|b| b.contains(n))
            .unwrap_or_else(|| panic!("state {n:?} outside the partitioned orthant"))
    }
}

/// Checks the three partition conditions; see [`PartitionError`].
///
/// Coverage and disjointness are decided on the finite breakpoint grid: every
/// grid cell lies wholly inside or outside each box, so checking one
/// representative per grid cell is exact.
pub fn validate_partition(boxes: Vec<LatticeBox>, dim: usize) -> Result<Partition, PartitionError> {
    if boxes.is_empty() {
        return Err(PartitionError::NoBoxes);
    }
    for (i, b) in boxes.iter().enumerate() {
        if b.dim() != dim {
            return Err(PartitionError::WrongDimension {
                index: i,
                expected: dim,
                found: b.dim(),
            });
        }
    }

    // Disjointness via pairwise interval intersection.
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if boxes[i].intersects(&boxes[j]) {
                return Err(PartitionError::Overlap { first: i, second: j });
            }
        }
    }

    // Coverage on the breakpoint grid.
    let grid = breakpoint_grid(&boxes, dim);
    let mut witness = vec![0i64; dim];
    if let Some(gap) = first_uncovered(&boxes, &grid, 0, &mut witness) {
        return Err(PartitionError::CoverageGap { witness: gap });
    }

    // Neighborhood constancy: each dimension either starts at >= 1 or is
    // pinned to {0}.
    for (i, b) in boxes.iter().enumerate() {
        for d in 0..dim {
            let lo = b.lower()[d];
            let up = b.upper()[d];
            if lo == 0 && up != Some(0) {
                return Err(PartitionError::MixedNeighborhood { index: i, dim: d });
            }
        }
    }

    let neighborhoods = boxes.iter().map(|b| b.neighborhood()).collect();
    Ok(Partition {
        dim,
        components: boxes,
        neighborhoods,
    })
}

/// Per-dimension sorted breakpoints: 0, every lower bound, every finite upper
/// bound plus one. Grid intervals run between consecutive breakpoints.
pub(crate) fn breakpoint_grid(boxes: &[LatticeBox], dim: usize) -> Vec<Vec<i64>> {
    (0..dim)
        .map(|d| {
            let mut points = vec![0i64];
            for b in boxes {
                points.push(b.lower()[d]);
                if let Some(u) = b.upper()[d] {
                    points.push(u + 1);
                }
            }
            points.sort_unstable();
            points.dedup();
            points
        })
        .collect()
}

fn first_uncovered(
    boxes: &[LatticeBox],
    grid: &[Vec<i64>],
    d: usize,
    witness: &mut Vec<i64>,
) -> Option<State> {
    if d == grid.len() {
        let covered = boxes.iter().filter(|b| b.contains(witness)).count();
        return (covered == 0).then(|| witness.clone());
    }
    for &p in &grid[d] {
        witness[d] = p;
        if let Some(gap) = first_uncovered(boxes, grid, d + 1, witness) {
            return Some(gap);
        }
    }
    None
}

/// Errors from refinement queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefinementError {
    /// Step not admissible from the given cell.
    StepNotAllowed { cell: usize, step: Step },
}

impl fmt::Display for RefinementError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefinementError::StepNotAllowed { cell, step } => {
                write!(f, "step {step:?} is not admissible from cell {cell}")
            }
        }
    }
}

impl core::error::Error for RefinementError {}

/// The grid refinement of a partition: cells on which the component of
/// `n + u` is constant for every admissible step `u`.
///
/// Cell indices are assigned in lexicographic order of the per-dimension
/// interval tuples, so constraint and variable naming is reproducible.
#[derive(Debug, Clone)]
pub struct Refinement {
    parent_partition: Partition,
    cells: Vec<LatticeBox>,
    cell_neighborhoods: Vec<Vec<Step>>,
    parent: Vec<usize>,
    neighbor: Vec<BTreeMap<Step, usize>>,
}

impl Refinement {
    pub fn dim(&self) -> usize {
        self.parent_partition.dim()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, j: usize) -> &LatticeBox {
        &self.cells[j]
    }

    pub fn cells(&self) -> &[LatticeBox] {
        &self.cells
    }

    pub fn partition(&self) -> &Partition {
        &self.parent_partition
    }

    /// Index of the parent component containing cell `j`.
    pub fn parent(&self, j: usize) -> usize {
        self.parent[j]
    }

    /// `N_j`: admissible steps from cell `j` (equals the parent's set).
    pub fn neighborhood(&self, j: usize) -> &[Step] {
        &self.cell_neighborhoods[j]
    }

    /// `z(n)`: index of the cell containing `n`.
    pub fn locate_cell(&self, n: &[i64]) -> usize {
        self.cells
            .iter()
            .position(|c| c.contains(n))
            .unwrap_or_else(|| panic!("state {n:?} outside the refined orthant"))
    }

    /// `c(j, u)`: parent component of `n + u` for any `n` in cell `j`.
    pub fn neighbor_component(&self, j: usize, u: &[i64]) -> Result<usize, RefinementError> {
        self.neighbor[j]
            .get(u)
            .copied()
            .ok_or_else(|| RefinementError::StepNotAllowed {
                cell: j,
                step: u.to_vec(),
            })
    }

    /// The cells as a standalone partition (they cover the orthant and are
    /// neighborhood-constant, so this always succeeds).
    pub fn cells_as_partition(&self) -> Partition {
        validate_partition(self.cells.clone(), self.dim())
            .expect("refinement cells form a valid partition")
    }

    /// One text row per cell: index, bounds, parent component.
    pub fn cell_table(&self) -> Vec<String> {
        self.cells
            .iter()
            .enumerate()
            .map(|(j, c)| format!("Z{j}: {c} (in C{})", self.parent[j]))
            .collect()
    }
}

/// Splits each grid interval of each dimension into its first point, its
/// interior, and its last point, then forms product cells. The resulting
/// cells satisfy the refinement conditions: singleton pieces shift to a fixed
/// coordinate, and interior pieces shift within their grid interval, so
/// component membership of `n + u` never varies within a cell.
pub fn refine(partition: &Partition) -> Refinement {
    let dim = partition.dim();
    let grid = breakpoint_grid(partition.components(), dim);

    // Per-dimension pieces: (lower, upper) with None = unbounded.
    let mut pieces: Vec<Vec<(i64, Option<i64>)>> = Vec::with_capacity(dim);
    for d in 0..dim {
        let points = &grid[d];
        let mut dim_pieces = Vec::new();
        for (idx, &a) in points.iter().enumerate() {
            match points.get(idx + 1) {
                Some(&next) => {
                    let b = next - 1;
                    if a == b {
                        dim_pieces.push((a, Some(a)));
                    } else {
                        dim_pieces.push((a, Some(a)));
                        if b - 1 >= a + 1 {
                            dim_pieces.push((a + 1, Some(b - 1)));
                        }
                        dim_pieces.push((b, Some(b)));
                    }
                }
                None => {
                    dim_pieces.push((a, Some(a)));
                    dim_pieces.push((a + 1, None));
                }
            }
        }
        pieces.push(dim_pieces);
    }

    // Product cells in lexicographic order of the piece tuples.
    let mut cells = Vec::new();
    let mut index = vec![0usize; dim];
    loop {
        let lower: Vec<i64> = (0..dim).map(|d| pieces[d][index[d]].0).collect();
        let upper: Vec<Option<i64>> = (0..dim).map(|d| pieces[d][index[d]].1).collect();
        cells.push(LatticeBox::new(lower, upper).expect("grid pieces are valid intervals"));
        // Advance the mixed-radix counter, last dimension fastest.
        let mut d = dim;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            index[d] += 1;
            if index[d] < pieces[d].len() {
                break;
            }
            index[d] = 0;
            if d == 0 {
                d = usize::MAX;
                break;
            }
        }
        if d == usize::MAX {
            break;
        }
    }

    let parent: Vec<usize> = cells
        .iter()
        .map(|c| partition.locate(c.lower()))
        .collect();
    let cell_neighborhoods: Vec<Vec<Step>> = cells.iter().map(|c| c.neighborhood()).collect();

    // Neighbor map from one representative per (cell, step); constancy over
    // the cell is guaranteed by the grid construction and double-checked on
    // the cell corners.
    let mut neighbor = Vec::with_capacity(cells.len());
    for (j, cell) in cells.iter().enumerate() {
        let mut map = BTreeMap::new();
        for u in &cell_neighborhoods[j] {
            let shifted: State = cell.lower().iter().zip(u.iter()).map(|(&n, &s)| n + s).collect();
            let k = partition.locate(&shifted);
            debug_assert!(cell.corners().iter().all(|c| {
                let m: State = c.iter().zip(u.iter()).map(|(&n, &s)| n + s).collect();
                partition.locate(&m) == k
            }));
            map.insert(u.clone(), k);
        }
        neighbor.push(map);
    }

    Refinement {
        parent_partition: partition.clone(),
        cells,
        cell_neighborhoods,
        parent,
        neighbor,
    }
}

/// `(∂Z, I(Z))` of a box: the corner states and the unbounded dimensions.
pub fn corners_and_unbounded(b: &LatticeBox) -> (Vec<State>, Vec<usize>) {
    (b.corners(), b.unbounded_dims())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Six-component partition of the quarter plane used throughout: the
    /// origin, two horizontal strips split at 5, and their interior columns.
    pub(crate) fn example_partition() -> Partition {
        let boxes = vec![
            LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap(),
            LatticeBox::new(vec![1, 0], vec![Some(4), Some(0)]).unwrap(),
            LatticeBox::new(vec![5, 0], vec![None, Some(0)]).unwrap(),
            LatticeBox::new(vec![0, 1], vec![Some(0), None]).unwrap(),
            LatticeBox::new(vec![1, 1], vec![Some(4), None]).unwrap(),
            LatticeBox::new(vec![5, 1], vec![None, None]).unwrap(),
        ];
        validate_partition(boxes, 2).unwrap()
    }

    #[test]
    fn example_partition_is_valid() {
        let p = example_partition();
        assert_eq!(p.len(), 6);
        assert_eq!(p.dim(), 2);
    }

    #[test]
    fn locate_finds_the_unique_component() {
        let p = example_partition();
        assert_eq!(p.locate(&[3, 0]), 1);
        assert_eq!(p.locate(&[0, 0]), 0);
        assert_eq!(p.locate(&[7, 3]), 5);
    }

    #[test]
    fn locate_is_left_inverse_of_membership() {
        let p = example_partition();
        for n in [
            vec![0, 0],
            vec![1, 0],
            vec![4, 7],
            vec![5, 0],
            vec![100, 200],
            vec![0, 55],
        ] {
            assert!(p.component(p.locate(&n)).contains(&n));
        }
    }

    #[test]
    fn full_orthant_box_mixes_neighborhoods() {
        let b = LatticeBox::new(vec![0, 0], vec![None, None]).unwrap();
        let err = validate_partition(vec![b], 2).unwrap_err();
        assert_eq!(err, PartitionError::MixedNeighborhood { index: 0, dim: 0 });
    }

    #[test]
    fn missing_interior_reports_gap_witness() {
        let boxes = vec![
            LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap(),
            LatticeBox::new(vec![1, 0], vec![None, Some(0)]).unwrap(),
            LatticeBox::new(vec![0, 1], vec![Some(0), None]).unwrap(),
        ];
        let err = validate_partition(boxes, 2).unwrap_err();
        assert_eq!(err, PartitionError::CoverageGap { witness: vec![1, 1] });
    }

    #[test]
    fn duplicate_boxes_overlap() {
        let b = LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap();
        let err = validate_partition(vec![b.clone(), b], 2).unwrap_err();
        assert_eq!(err, PartitionError::Overlap { first: 0, second: 1 });
    }

    #[test]
    fn refine_reproduces_the_eighteen_cell_grid() {
        let p = example_partition();
        let r = refine(&p);

        let dim1: [(i64, Option<i64>); 6] = [
            (0, Some(0)),
            (1, Some(1)),
            (2, Some(3)),
            (4, Some(4)),
            (5, Some(5)),
            (6, None),
        ];
        let dim2: [(i64, Option<i64>); 3] = [(0, Some(0)), (1, Some(1)), (2, None)];

        let mut expected = Vec::new();
        for &(l1, u1) in &dim1 {
            for &(l2, u2) in &dim2 {
                expected.push(LatticeBox::new(vec![l1, l2], vec![u1, u2]).unwrap());
            }
        }
        assert_eq!(r.cells(), expected.as_slice());
    }

    #[test]
    fn refine_one_dimensional_splits_the_tail() {
        let p = validate_partition(
            vec![
                LatticeBox::new(vec![0], vec![Some(0)]).unwrap(),
                LatticeBox::new(vec![1], vec![None]).unwrap(),
            ],
            1,
        )
        .unwrap();
        let r = refine(&p);
        let expected = vec![
            LatticeBox::new(vec![0], vec![Some(0)]).unwrap(),
            LatticeBox::new(vec![1], vec![Some(1)]).unwrap(),
            LatticeBox::new(vec![2], vec![None]).unwrap(),
        ];
        assert_eq!(r.cells(), expected.as_slice());
    }

    #[test]
    fn refine_is_deterministic_and_cells_form_a_valid_partition() {
        let p = example_partition();
        let a = refine(&p);
        let b = refine(&p);
        assert_eq!(a.cells(), b.cells());
        let as_partition = a.cells_as_partition();
        assert_eq!(as_partition.len(), 18);
        // Refining the cell partition stays valid and refines it further.
        let again = refine(&as_partition);
        for cell in again.cells() {
            let parent = as_partition.locate(cell.lower());
            for corner in cell.corners() {
                assert_eq!(as_partition.locate(&corner), parent);
            }
        }
    }

    #[test]
    fn cell_count_is_bounded_by_component_count() {
        let p = example_partition();
        let r = refine(&p);
        let bound: usize = (0..p.dim()).map(|_| 2 * p.len() + 1).product();
        assert!(r.len() <= bound, "{} cells exceeds bound {}", r.len(), bound);
    }

    #[test]
    fn corners_and_unbounded_dims() {
        let b = LatticeBox::new(vec![1, 1], vec![Some(4), None]).unwrap();
        let (corners, unbounded) = corners_and_unbounded(&b);
        assert_eq!(unbounded, vec![1]);
        assert_eq!(corners, vec![vec![1, 1], vec![4, 1]]);

        let origin = LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap();
        let (corners, unbounded) = corners_and_unbounded(&origin);
        assert!(unbounded.is_empty());
        assert_eq!(corners, vec![vec![0, 0]]);

        let b3 = LatticeBox::new(vec![2, 0, 1], vec![Some(3), Some(0), None]).unwrap();
        let (corners, unbounded) = corners_and_unbounded(&b3);
        assert_eq!(unbounded, vec![2]);
        assert_eq!(corners, vec![vec![2, 0, 1], vec![3, 0, 1]]);
    }

    #[test]
    fn corner_count_stays_within_two_to_the_m() {
        let p = example_partition();
        for r in refine(&p).cells() {
            assert!(r.corners().len() <= 1 << p.dim());
            assert!(r.unbounded_dims().len() <= p.dim());
        }
    }

    #[test]
    fn neighbor_component_matches_direct_lookup() {
        let p = example_partition();
        let r = refine(&p);

        // Cell {1}x{0} shifted by (-1,0) lands in the origin component.
        let j = r.locate_cell(&[1, 0]);
        assert_eq!(r.neighbor_component(j, &[-1, 0]).unwrap(), 0);

        // Cell {4}x{0} shifted by (+1,0) lands in the right strip.
        let j = r.locate_cell(&[4, 0]);
        assert_eq!(r.neighbor_component(j, &[1, 0]).unwrap(), 2);

        // Zero shift returns the parent.
        for j in 0..r.len() {
            assert_eq!(r.neighbor_component(j, &vec![0; 2]).unwrap(), r.parent(j));
        }

        // Steps outside the neighborhood are rejected.
        let j = r.locate_cell(&[0, 0]);
        assert!(r.neighbor_component(j, &[-1, 0]).is_err());
    }

    #[test]
    fn neighbor_map_is_constant_over_sampled_cell_states() {
        let p = example_partition();
        let r = refine(&p);
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for j in 0..r.len() {
            let cell = r.cell(j).clone();
            let mut samples = cell.corners();
            for _ in 0..50 {
                let n: State = cell
                    .lower()
                    .iter()
                    .zip(cell.upper().iter())
                    .map(|(&lo, &up)| match up {
                        Some(u) => lo + (next() % (u - lo + 1) as u64) as i64,
                        None => lo + (next() % 40) as i64,
                    })
                    .collect();
                samples.push(n);
            }
            for u in r.neighborhood(j) {
                let expect = r.neighbor_component(j, u).unwrap();
                for n in &samples {
                    let m: State = n.iter().zip(u.iter()).map(|(&a, &b)| a + b).collect();
                    assert_eq!(p.locate(&m), expect, "cell {j} step {u:?} state {n:?}");
                }
            }
        }
    }

    #[test]
    fn neighborhood_of_axis_box_excludes_descent() {
        let b = LatticeBox::new(vec![1, 0], vec![Some(4), Some(0)]).unwrap();
        let steps = b.neighborhood();
        assert_eq!(steps.len(), 6);
        assert!(steps.contains(&vec![-1, 0]));
        assert!(steps.contains(&vec![1, 1]));
        assert!(!steps.iter().any(|u| u[1] < 0));
    }
}
