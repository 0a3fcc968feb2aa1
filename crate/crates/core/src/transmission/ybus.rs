//! Bus admittance matrix assembly.

use super::grid::Grid;
use crate::Cplx;

/// Builds the dense bus admittance matrix from pi-branches. Off-nominal
/// taps sit on the `from` side: series admittance y gives y/a^2 at from,
/// y at to, and -y/a on the off-diagonals.
pub fn build_ybus(grid: &Grid) -> Vec<Vec<Cplx>> {
    let n = grid.buses.len();
    let mut y = vec![vec![Cplx::new(0.0, 0.0); n]; n];
    for br in &grid.branches {
        let series = Cplx::new(1.0, 0.0) / Cplx::new(br.r_pu, br.x_pu);
        let shunt = Cplx::new(0.0, br.b_pu / 2.0);
        let a = br.tap;
        y[br.from][br.from] += series / (a * a) + shunt;
        y[br.to][br.to] += series + shunt;
        y[br.from][br.to] -= series / a;
        y[br.to][br.from] -= series / a;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transmission::Grid;

    #[test]
    fn assembles_symmetric_line_admittance() {
        let text = r#"
            name = "t"
            s_base_mva = 100.0

            [[bus]]
            name = "a"

            [[bus]]
            name = "b"

            [[branch]]
            from = "a"
            to = "b"
            r_pu = 0.01
            x_pu = 0.1
            b_pu = 0.02

            [[generator]]
            name = "g"
            bus = "a"
            h_s = 5.0
            xd_pu = 0.2
            r_droop = 0.05
            tg_s = 0.5
            p_min_mw = 0.0
            p_max_mw = 100.0
            slack = true
        "#;
        let grid = Grid::from_toml_str(text).unwrap();
        let y = build_ybus(&grid);
        let series = Cplx::new(1.0, 0.0) / Cplx::new(0.01, 0.1);
        assert!((y[0][1] + series).norm() < 1e-12);
        assert!((y[0][1] - y[1][0]).norm() < 1e-15);
        assert!((y[0][0] - (series + Cplx::new(0.0, 0.01))).norm() < 1e-12);
    }

    #[test]
    fn tap_scales_from_side() {
        let text = r#"
            name = "t"
            s_base_mva = 100.0

            [[bus]]
            name = "a"

            [[bus]]
            name = "b"

            [[branch]]
            from = "a"
            to = "b"
            r_pu = 0.0
            x_pu = 0.1
            tap = 1.05

            [[generator]]
            name = "g"
            bus = "a"
            h_s = 5.0
            xd_pu = 0.2
            r_droop = 0.05
            tg_s = 0.5
            p_min_mw = 0.0
            p_max_mw = 100.0
            slack = true
        "#;
        let grid = Grid::from_toml_str(text).unwrap();
        let y = build_ybus(&grid);
        let series = Cplx::new(0.0, -10.0);
        assert!((y[0][0] - series / (1.05 * 1.05)).norm() < 1e-12);
        assert!((y[1][1] - series).norm() < 1e-12);
        assert!((y[0][1] + series / 1.05).norm() < 1e-12);
    }
}
