//! Shortest forward paths between poses with a bounded turn radius.

use std::f64::consts::PI;

use crate::geometry::Pose2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Word {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl Word {
    pub const ALL: [Word; 6] = [Word::Lsl, Word::Rsr, Word::Lsr, Word::Rsl, Word::Rlr, Word::Lrl];

    /// Turn direction of each of the three segments (+1 left, -1 right, 0 straight).
    fn turns(self) -> [f64; 3] {
        match self {
            Word::Lsl => [1.0, 0.0, 1.0],
            Word::Rsr => [-1.0, 0.0, -1.0],
            Word::Lsr => [1.0, 0.0, -1.0],
            Word::Rsl => [-1.0, 0.0, 1.0],
            Word::Rlr => [-1.0, 1.0, -1.0],
            Word::Lrl => [1.0, -1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DubinsPath {
    pub start: Pose2D,
    pub radius: f64,
    pub word: Word,
    /// Segment lengths in metres.
    pub lengths: [f64; 3],
}

fn mod2pi(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}

/// Normalized segment lengths (t, p, q) for one word, if it exists.
fn word_lengths(word: Word, alpha: f64, beta: f64, d: f64) -> Option<[f64; 3]> {
    let (sa, ca, sb, cb) = (alpha.sin(), alpha.cos(), beta.sin(), beta.cos());
    let cab = (alpha - beta).cos();
    match word {
        Word::Lsl => {
            let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
            if p2 < 0.0 {
                return None;
            }
            let tmp = (cb - ca).atan2(d + sa - sb);
            Some([mod2pi(tmp - alpha), p2.sqrt(), mod2pi(beta - tmp)])
        }
        Word::Rsr => {
            let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
            if p2 < 0.0 {
                return None;
            }
            let tmp = (ca - cb).atan2(d - sa + sb);
            Some([mod2pi(alpha - tmp), p2.sqrt(), mod2pi(tmp - beta)])
        }
        Word::Lsr => {
            let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
            if p2 < 0.0 {
                return None;
            }
            let p = p2.sqrt();
            let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            Some([mod2pi(tmp - alpha), p, mod2pi(tmp - beta)])
        }
        Word::Rsl => {
            let p2 = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb);
            if p2 < 0.0 {
                return None;
            }
            let p = p2.sqrt();
            let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            Some([mod2pi(alpha - tmp), p, mod2pi(beta - tmp)])
        }
        Word::Rlr => {
            let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
            if tmp.abs() > 1.0 {
                return None;
            }
            let p = mod2pi(2.0 * PI - tmp.acos());
            let t = mod2pi(alpha - (ca - cb).atan2(d - sa + sb) + p / 2.0);
            Some([t, p, mod2pi(alpha - beta - t + p)])
        }
        Word::Lrl => {
            let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
            if tmp.abs() > 1.0 {
                return None;
            }
            let p = mod2pi(2.0 * PI - tmp.acos());
            let t = mod2pi(-alpha - (ca - cb).atan2(d + sa - sb) + p / 2.0);
            Some([t, p, mod2pi(beta - alpha - t + p)])
        }
    }
}

/// Pose after driving `s` metres at constant curvature `kappa`.
pub fn arc_pose(p: &Pose2D, kappa: f64, s: f64) -> Pose2D {
    if kappa.abs() < 1e-12 {
        return Pose2D::new(p.x + s * p.theta.cos(), p.y + s * p.theta.sin(), p.theta);
    }
    let th = p.theta + kappa * s;
    Pose2D::new(p.x + (th.sin() - p.theta.sin()) / kappa, p.y - (th.cos() - p.theta.cos()) / kappa, th)
}

impl DubinsPath {
    /// Every feasible word, shortest first.
    pub fn candidates(start: &Pose2D, goal: &Pose2D, radius: f64) -> Vec<DubinsPath> {
        let dx = goal.x - start.x;
        let dy = goal.y - start.y;
        let d = (dx * dx + dy * dy).sqrt() / radius;
        let phi = if d > 0.0 { dy.atan2(dx) } else { 0.0 };
        let alpha = mod2pi(start.theta - phi);
        let beta = mod2pi(goal.theta - phi);
        let mut out: Vec<DubinsPath> = Word::ALL
            .iter()
            .filter_map(|&w| {
                word_lengths(w, alpha, beta, d).map(|l| DubinsPath {
                    start: *start,
                    radius,
                    word: w,
                    lengths: [l[0] * radius, l[1] * radius, l[2] * radius],
                })
            })
            .collect();
        out.sort_by(|a, b| a.length().total_cmp(&b.length()));
        out
    }

    pub fn shortest(start: &Pose2D, goal: &Pose2D, radius: f64) -> Option<DubinsPath> {
        Self::candidates(start, goal, radius).into_iter().next()
    }

    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Total absolute heading change, radians.
    pub fn turning(&self) -> f64 {
        self.curvatures().iter().zip(&self.lengths).map(|(k, l)| k.abs() * l).sum()
    }

    fn curvatures(&self) -> [f64; 3] {
        self.word.turns().map(|t| t / self.radius)
    }

    /// Pose and local curvature at arc length `s`.
    pub fn sample(&self, s: f64) -> (Pose2D, f64) {
        let k = self.curvatures();
        let mut p = self.start;
        let mut rem = s.clamp(0.0, self.length());
        for i in 0..3 {
            if rem <= self.lengths[i] || i == 2 {
                return (arc_pose(&p, k[i], rem.min(self.lengths[i])), k[i]);
            }
            p = arc_pose(&p, k[i], self.lengths[i]);
            rem -= self.lengths[i];
        }
        unreachable!()
    }

    pub fn end(&self) -> Pose2D {
        self.sample(self.length()).0
    }

    /// Poses (excluding the start) at spacing <= `step`, each with the
    /// curvature of the motion that leads to it. Segment joints are included.
    pub fn samples(&self, step: f64) -> Vec<(Pose2D, f64)> {
        let k = self.curvatures();
        let mut out = Vec::new();
        let mut p = self.start;
        for i in 0..3 {
            let len = self.lengths[i];
            if len <= 1e-9 {
                continue;
            }
            let n = (len / step).ceil().max(1.0) as usize;
            for j in 1..=n {
                out.push((arc_pose(&p, k[i], len * j as f64 / n as f64), k[i]));
            }
            p = arc_pose(&p, k[i], len);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize_angle;
    use proptest::prelude::*;

    fn close(a: &Pose2D, b: &Pose2D) -> bool {
        (a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6 && normalize_angle(a.theta - b.theta).abs() < 1e-6
    }

    #[test]
    fn straight_ahead() {
        let p = DubinsPath::shortest(&Pose2D::IDENTITY, &Pose2D::new(10.0, 0.0, 0.0), 3.5).unwrap();
        assert!((p.length() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn half_turn() {
        let r = 2.0;
        let p = DubinsPath::shortest(&Pose2D::IDENTITY, &Pose2D::new(0.0, 2.0 * r, PI), r).unwrap();
        assert!((p.length() - PI * r).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn every_word_reaches_goal(
            x in -20.0..20.0f64, y in -20.0..20.0f64, th0 in -3.1..3.1f64, th1 in -3.1..3.1f64, r in 1.0..8.0f64
        ) {
            let s = Pose2D::new(0.5, -1.0, th0);
            let g = Pose2D::new(x, y, th1);
            let c = DubinsPath::candidates(&s, &g, r);
            prop_assert!(!c.is_empty());
            for p in &c {
                prop_assert!(close(&p.end(), &g), "{:?} ends at {:?}", p.word, p.end());
                let last = p.samples(0.25).last().unwrap().0;
                prop_assert!(close(&last, &g));
            }
            // never shorter than the straight-line distance
            prop_assert!(c[0].length() >= s.position().distance(g.position()) - 1e-9);
        }
    }
}
