/// Numerical tolerances shared by every solver entry point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal feasibility (row activity and bounds), absolute on row-scaled data.
    pub feasibility: f64,
    /// Distance from 0/1 below which a binary counts as integral.
    pub integrality: f64,
    /// Relative branch-and-bound optimality gap.
    pub gap: f64,
    /// Cone residual accepted by the cutting-plane loop.
    pub cone: f64,
    /// Reduced-cost threshold on the scaled objective.
    pub optimality: f64,
    /// Smallest pivot magnitude accepted in ratio tests and factorizations.
    pub pivot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            integrality: 1e-6,
            gap: 1e-4,
            cone: 1e-6,
            optimality: 1e-9,
            pivot: 1e-9,
        }
    }
}
