use proptest::prelude::*;

use spherenav::controller::{Controller, ControllerConfig, Mode};
use spherenav::executor::{run, RunConfig};
use spherenav::geometry::{vec_of, VecN};
use spherenav::world::validate;
use spherenav::{ObstacleSpec, Params, Workspace};

/// Three planar obstacles on a coarse grid, so that any choice is disjoint.
fn grid_world(slots: &[(usize, f64)], target: (f64, f64)) -> Option<Workspace> {
    let specs: Vec<ObstacleSpec> = slots
        .iter()
        .map(|&(slot, r)| {
            let (i, j) = (slot % 3, slot / 3);
            ObstacleSpec::new(vec_of(&[3.0 * i as f64 - 3.0, 3.0 * j as f64 - 3.0]), r)
        })
        .collect();
    let xd = vec_of(&[target.0, target.1]);
    if !validate(&xd, &specs, &Params::default()).is_empty() {
        return None;
    }
    Workspace::new(xd, &specs, &Params::default()).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_are_safe_and_converge(
        slots in proptest::sample::subsequence((0..9usize).collect::<Vec<_>>(), 3),
        radii in proptest::collection::vec(0.4f64..1.2, 3),
        tx in -5.0f64..5.0, ty in -5.0f64..5.0,
        sx in -6.0f64..6.0, sy in -6.0f64..6.0,
    ) {
        let slots: Vec<(usize, f64)> = slots.into_iter().zip(radii).collect();
        let ws = grid_world(&slots, (tx, ty));
        prop_assume!(ws.is_some());
        let ws = ws.unwrap();
        let x0 = vec_of(&[sx, sy]);
        prop_assume!(ws.clearance(&x0) > 0.05);
        let cfg = RunConfig::default();
        let res = run(&ws, &x0, &cfg).unwrap();
        prop_assert!(res.outcome.converged(), "{:?}", res.outcome);
        let u_max = res.trajectory.samples.iter().map(|s| s.u.norm()).fold(0.0, f64::max);
        for s in &res.trajectory.samples {
            prop_assert!(s.clearance >= -u_max * cfg.dt);
        }
        prop_assert!(res.trajectory.switches.len() <= 2 * ws.len() + 1);
    }

    #[test]
    fn modes_cover_free_space(
        px in -6.0f64..6.0, py in -6.0f64..6.0,
        ex in 0.0f64..std::f64::consts::TAU,
    ) {
        let ws = grid_world(&[(0, 1.0), (4, 0.8), (7, 0.6)], (4.0, 4.0)).unwrap();
        let ctrl = Controller::new(&ws, ControllerConfig::default());
        let x = vec_of(&[px, py]);
        prop_assume!(ws.in_free_space(&x));
        prop_assert!(ctrl.in_f0(&x) || ctrl.in_j0(&x));
        for k in 0..ws.len() {
            let o = &ws.obstacles()[k];
            let entry: VecN = &o.center + vec_of(&[ex.cos(), ex.sin()]) * (o.radius + 0.5 * o.active_range);
            let Ok(vd) = ctrl.select_virtual_destinations(k, &entry) else { continue };
            for m in [Mode::Pos, Mode::Neg] {
                prop_assert!(ctrl.in_fkm(&x, &vd, m) || ctrl.in_jkm(&x, &vd, m));
            }
        }
    }
}
