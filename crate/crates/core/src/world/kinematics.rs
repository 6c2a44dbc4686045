use std::f64::consts::PI;

use super::{WorldConfig, JOINTS};

/// Wrap an angle into [-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Planar chain pose relative to the arm base: position is the sum of the link
/// vectors, heading is the sum of the (wrapped) joint angles.
pub fn chain_pose(links: &[f64; JOINTS], joints: &[f64; JOINTS]) -> (f64, f64, f64) {
    let mut heading = 0.0;
    let (mut x, mut y) = (0.0, 0.0);
    for (l, q) in links.iter().zip(joints) {
        heading += wrap_angle(*q);
        x += l * heading.cos();
        y += l * heading.sin();
    }
    (x, y, heading)
}

/// End-effector pose of `arm` in world coordinates.
pub fn forward_kinematics(cfg: &WorldConfig, arm: usize, joints: &[f64; JOINTS]) -> (f64, f64, f64) {
    let (x, y, th) = chain_pose(&cfg.link_lengths, joints);
    let (bx, by) = cfg.arm_bases[arm];
    (bx + x, by + y, th)
}

/// Joint positions along the chain, base first, in world coordinates.
pub fn link_points(cfg: &WorldConfig, arm: usize, joints: &[f64; JOINTS]) -> Vec<(f64, f64)> {
    let (mut x, mut y) = cfg.arm_bases[arm];
    let mut pts = vec![(x, y)];
    let mut heading = 0.0;
    for (l, q) in cfg.link_lengths.iter().zip(joints) {
        heading += wrap_angle(*q);
        x += l * heading.cos();
        y += l * heading.sin();
        pts.push((x, y));
    }
    pts
}

/// Rows: d(x)/dq, d(y)/dq, d(theta)/dq.
pub fn jacobian(links: &[f64; JOINTS], joints: &[f64; JOINTS]) -> [[f64; JOINTS]; 3] {
    let mut headings = [0.0; JOINTS];
    let mut acc = 0.0;
    for i in 0..JOINTS {
        acc += joints[i];
        headings[i] = acc;
    }
    let mut jac = [[0.0; JOINTS]; 3];
    for i in 0..JOINTS {
        for j in i..JOINTS {
            jac[0][i] -= links[j] * headings[j].sin();
            jac[1][i] += links[j] * headings[j].cos();
        }
        jac[2][i] = 1.0;
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINKS: [f64; JOINTS] = [16.0, 14.0, 12.0, 8.0, 6.0, 4.0];

    #[test]
    fn straight_chain() {
        let (x, y, th) = chain_pose(&LINKS, &[0.0; JOINTS]);
        assert_eq!((x, y, th), (60.0, 0.0, 0.0));
    }

    #[test]
    fn reversed_chain() {
        let (x, y, th) = chain_pose(&LINKS, &[PI, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((x + 60.0).abs() < 1e-9 && y.abs() < 1e-9);
        assert!((th - PI).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let q = [0.3, -0.7, 1.1, 0.2, -0.4, 0.9];
        let jac = jacobian(&LINKS, &q);
        let h = 1e-6;
        for i in 0..JOINTS {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let p = chain_pose(&LINKS, &qp);
            let m = chain_pose(&LINKS, &qm);
            assert!(((p.0 - m.0) / (2.0 * h) - jac[0][i]).abs() < 1e-5);
            assert!(((p.1 - m.1) / (2.0 * h) - jac[1][i]).abs() < 1e-5);
        }
    }

    #[test]
    fn wrap_stays_in_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.77);
            assert!((-PI..=PI).contains(&a));
        }
    }
}
