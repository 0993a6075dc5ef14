//! Component-wise linear functions, the shift transform that turns them into
//! cell-wise linear functions, and the corner reduction that replaces a
//! pointwise inequality on a box by finitely many corner evaluations plus
//! sign constraints on unbounded-dimension coefficients.

use alloc::vec;
use alloc::vec::Vec;

use crate::lattice::{LatticeBox, Partition, Refinement, RefinementError};
use crate::lp::LinExpr;

/// Function affine in `n` separately on each partition component:
/// `H(n) = h_{k,0} + Σ_i h_{k,i}·n_i` for `n ∈ C_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CLinearFn {
    /// `coeffs[k] = [h_{k,0}, h_{k,1}, ..., h_{k,M}]`.
    coeffs: Vec<Vec<f64>>,
}

impl CLinearFn {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Self {
        CLinearFn { coeffs }
    }

    /// Same affine form on every component.
    pub fn uniform(components: usize, row: Vec<f64>) -> Self {
        CLinearFn {
            coeffs: vec![row; components],
        }
    }

    pub fn zero(components: usize, dim: usize) -> Self {
        CLinearFn {
            coeffs: vec![vec![0.0; dim + 1]; components],
        }
    }

    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// `H(n)` via the containing component.
    pub fn evaluate(&self, partition: &Partition, n: &[i64]) -> f64 {
        let k = partition.locate(n);
        self.evaluate_on(k, n)
    }

    /// `H(n)` with the component index already known.
    pub fn evaluate_on(&self, k: usize, n: &[i64]) -> f64 {
        let row = &self.coeffs[k];
        row[0]
            + row[1..]
                .iter()
                .zip(n.iter())
                .map(|(&c, &x)| c * x as f64)
                .sum::<f64>()
    }

    pub fn to_symbolic(&self) -> SymbolicCLinear {
        SymbolicCLinear {
            coeffs: self
                .coeffs
                .iter()
                .map(|row| row.iter().map(|&c| LinExpr::constant(c)).collect())
                .collect(),
        }
    }
}

/// A component-wise linear function whose coefficients are affine expressions
/// over LP decision variables. This is the form in which the bound problems
/// carry their unknown certificate functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicCLinear {
    /// `coeffs[k][i]`, `i = 0` the constant coefficient.
    pub coeffs: Vec<Vec<LinExpr>>,
}

impl SymbolicCLinear {
    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    /// Symbolic value of `H` at integer state `n` inside component `k`.
    pub fn at(&self, k: usize, n: &[i64]) -> LinExpr {
        affine_at(&self.coeffs[k], n)
    }
}

/// A cell-wise linear function with affine-in-decision-variable coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicZLinear {
    /// `coeffs[j][i]`, `i = 0` the constant coefficient.
    pub coeffs: Vec<Vec<LinExpr>>,
}

impl SymbolicZLinear {
    pub fn cells(&self) -> usize {
        self.coeffs.len()
    }

    pub fn at(&self, j: usize, n: &[i64]) -> LinExpr {
        affine_at(&self.coeffs[j], n)
    }
}

/// Evaluates affine coefficient rows at an integer point: exact corner
/// coordinates, floating arithmetic only on the coefficients.
pub fn affine_at(row: &[LinExpr], n: &[i64]) -> LinExpr {
    let mut out = row[0].clone();
    for (i, &x) in n.iter().enumerate() {
        out.add_scaled(&row[i + 1], x as f64);
    }
    out
}

/// `G(n) = H(n + u)` on each cell, exact by the shift identity: with
/// `k' = c(j, u)`, the cell coefficients are `g_{j,0} = h_{k',0} + Σ_i
/// h_{k',i}·u_i` and `g_{j,i} = h_{k',i}`.
pub fn shift(
    h: &SymbolicCLinear,
    refinement: &Refinement,
    u: &[i64],
) -> Result<SymbolicZLinear, RefinementError> {
    let dim = refinement.dim();
    let mut coeffs = Vec::with_capacity(refinement.len());
    for j in 0..refinement.len() {
        let k = refinement.neighbor_component(j, u)?;
        let src = &h.coeffs[k];
        let mut row = Vec::with_capacity(dim + 1);
        let mut constant = src[0].clone();
        for (i, &ui) in u.iter().enumerate() {
            constant.add_scaled(&src[i + 1], ui as f64);
        }
        row.push(constant);
        for i in 0..dim {
            row.push(src[i + 1].clone());
        }
        coeffs.push(row);
    }
    Ok(SymbolicZLinear { coeffs })
}

/// Constraints equivalent to `E(n) <= 0` for all states of `cell`: one
/// expression per corner plus one per unbounded-dimension coefficient.
/// Each returned expression is to be read as `expr <= 0`.
pub fn corner_reduce_on_box(row: &[LinExpr], cell: &LatticeBox) -> Vec<LinExpr> {
    let mut out = Vec::new();
    for corner in cell.corners() {
        out.push(affine_at(row, &corner));
    }
    for i in cell.unbounded_dims() {
        out.push(row[i + 1].clone());
    }
    out
}

/// Corner reduction of a cell-wise linear expression over every cell of the
/// refinement; the conjunction is equivalent to `E <= 0` on the whole orthant.
pub fn corner_reduce(e: &SymbolicZLinear, refinement: &Refinement) -> Vec<LinExpr> {
    let mut out = Vec::new();
    for (j, row) in e.coeffs.iter().enumerate() {
        out.extend(corner_reduce_on_box(row, refinement.cell(j)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{refine, validate_partition, LatticeBox};

    fn example_partition() -> Partition {
        validate_partition(
            alloc::vec![
                LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap(),
                LatticeBox::new(vec![1, 0], vec![Some(4), Some(0)]).unwrap(),
                LatticeBox::new(vec![5, 0], vec![None, Some(0)]).unwrap(),
                LatticeBox::new(vec![0, 1], vec![Some(0), None]).unwrap(),
                LatticeBox::new(vec![1, 1], vec![Some(4), None]).unwrap(),
                LatticeBox::new(vec![5, 1], vec![None, None]).unwrap(),
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn evaluates_componentwise_affine_forms() {
        let p = example_partition();
        let f = CLinearFn::uniform(p.len(), vec![0.0, 1.0, 1.0]);
        assert_eq!(f.evaluate(&p, &[3, 4]), 7.0);

        // Indicator of the two right-side strips.
        let mut coeffs = vec![vec![0.0, 0.0, 0.0]; p.len()];
        coeffs[2][0] = 1.0;
        coeffs[5][0] = 1.0;
        let ind = CLinearFn::new(coeffs);
        assert_eq!(ind.evaluate(&p, &[9, 0]), 1.0);
        assert_eq!(ind.evaluate(&p, &[4, 2]), 0.0);

        // Indicator of the origin alone.
        let mut coeffs = vec![vec![0.0, 0.0, 0.0]; p.len()];
        coeffs[0][0] = 1.0;
        let origin = CLinearFn::new(coeffs);
        assert_eq!(origin.evaluate(&p, &[0, 0]), 1.0);
        assert_eq!(origin.evaluate(&p, &[1, 0]), 0.0);
    }

    #[test]
    fn shift_of_a_global_coordinate_adds_the_step() {
        let p = example_partition();
        let r = refine(&p);
        let h = CLinearFn::uniform(p.len(), vec![0.0, 1.0, 0.0]).to_symbolic();
        let g = shift(&h, &r, &[1, 0]).unwrap();
        for j in 0..r.len() {
            assert_eq!(g.coeffs[j][0], LinExpr::constant(1.0));
            assert_eq!(g.coeffs[j][1], LinExpr::constant(1.0));
            assert_eq!(g.coeffs[j][2], LinExpr::constant(0.0));
        }
    }

    #[test]
    fn zero_shift_restricts_to_cells() {
        let p = example_partition();
        let r = refine(&p);
        let mut coeffs = vec![vec![0.0, 1.0, 0.0]; p.len()];
        coeffs[4][1] = 2.0;
        let h = CLinearFn::new(coeffs);
        let g = shift(&h.to_symbolic(), &r, &[0, 0]).unwrap();
        for j in 0..r.len() {
            let k = r.parent(j);
            assert_eq!(g.coeffs[j][1], LinExpr::constant(h.row(k)[1]));
        }
    }

    #[test]
    fn shift_is_exact_on_corners_and_interior_points() {
        let p = example_partition();
        let r = refine(&p);
        // Piecewise slope: 1 on most components, 2 on the middle column.
        let mut coeffs = vec![vec![0.5, 1.0, 0.25]; p.len()];
        coeffs[4] = vec![-1.0, 2.0, 0.75];
        let h = CLinearFn::new(coeffs);
        let sym = h.to_symbolic();
        for u in [[1i64, 0], [0, 1], [1, 1]] {
            let g = shift(&sym, &r, &u).unwrap();
            for j in 0..r.len() {
                if r.neighbor_component(j, &u).is_err() {
                    continue;
                }
                let cell = r.cell(j).clone();
                let mut samples = cell.corners();
                samples.push(
                    cell.lower()
                        .iter()
                        .zip(cell.upper().iter())
                        .map(|(&lo, &up)| up.map_or(lo + 3, |u| (lo + u) / 2))
                        .collect(),
                );
                for n in samples {
                    let m: Vec<i64> = n.iter().zip(u.iter()).map(|(&a, &b)| a + b).collect();
                    let direct = h.evaluate(&p, &m);
                    let shifted = g.at(j, &n).constant_part();
                    assert!(
                        (direct - shifted).abs() < 1e-12,
                        "cell {j} u {u:?} n {n:?}: {direct} vs {shifted}"
                    );
                }
            }
        }
    }

    #[test]
    fn corner_reduction_flags_the_violated_corner() {
        let cell = LatticeBox::new(vec![1, 1], vec![Some(4), None]).unwrap();
        // E(n) = -3 + n_1: violated at (4,1) where E = 1.
        let row = vec![
            LinExpr::constant(-3.0),
            LinExpr::constant(1.0),
            LinExpr::constant(0.0),
        ];
        let constraints = corner_reduce_on_box(&row, &cell);
        // Two corners plus one unbounded-dimension sign condition.
        assert_eq!(constraints.len(), 3);
        let values: Vec<f64> = constraints.iter().map(|c| c.constant_part()).collect();
        assert!((values[0] - (-2.0)).abs() < 1e-12);
        assert!((values[1] - 1.0).abs() < 1e-12);
        assert!(values[1] > 0.0, "corner (4,1) must violate");
        assert_eq!(values[2], 0.0);
    }

    #[test]
    fn corner_reduction_flags_divergent_unbounded_coefficients() {
        let cell = LatticeBox::new(vec![1, 1], vec![Some(4), None]).unwrap();
        let row = vec![
            LinExpr::constant(-100.0),
            LinExpr::constant(0.0),
            LinExpr::constant(0.5),
        ];
        let constraints = corner_reduce_on_box(&row, &cell);
        let sign_cond = constraints.last().unwrap().constant_part();
        assert_eq!(sign_cond, 0.5);
        assert!(sign_cond > 0.0, "positive slope on an unbounded dim violates");
    }

    #[test]
    fn point_box_reduces_to_one_corner() {
        let cell = LatticeBox::new(vec![0, 0], vec![Some(0), Some(0)]).unwrap();
        let row = vec![
            LinExpr::constant(7.0),
            LinExpr::constant(3.0),
            LinExpr::constant(-2.0),
        ];
        let constraints = corner_reduce_on_box(&row, &cell);
        assert_eq!(constraints.len(), 1);
        assert_eq!(constraints[0].constant_part(), 7.0);
    }

    #[test]
    fn corner_reduction_agrees_with_exhaustive_enumeration() {
        // On bounded cells, the reduced system's verdict must match brute
        // force over every state of the cell.
        let cells = [
            LatticeBox::new(vec![1, 1], vec![Some(6), Some(9)]).unwrap(),
            LatticeBox::new(vec![0, 2], vec![Some(0), Some(40)]).unwrap(),
            LatticeBox::new(vec![2, 3], vec![Some(30), Some(30)]).unwrap(),
        ];
        let rows: Vec<Vec<f64>> = alloc::vec![
            alloc::vec![-5.0, 1.0, -1.0],
            alloc::vec![-10.0, 0.3, 0.2],
            alloc::vec![2.0, -1.0, 0.1],
            alloc::vec![0.0, 0.0, 0.0],
        ];
        for cell in &cells {
            for raw in &rows {
                let row: Vec<LinExpr> =
                    raw.iter().map(|&c| LinExpr::constant(c)).collect();
                let reduced_ok = corner_reduce_on_box(&row, cell)
                    .iter()
                    .all(|c| c.constant_part() <= 1e-12);
                let mut brute_ok = true;
                let lo = cell.lower();
                let hi: Vec<i64> = cell
                    .upper()
                    .iter()
                    .map(|u| u.expect("bounded cell"))
                    .collect();
                for x in lo[0]..=hi[0] {
                    for y in lo[1]..=hi[1] {
                        let v = raw[0] + raw[1] * x as f64 + raw[2] * y as f64;
                        if v > 1e-12 {
                            brute_ok = false;
                        }
                    }
                }
                assert_eq!(reduced_ok, brute_ok, "cell {cell} row {raw:?}");
            }
        }
    }
}
