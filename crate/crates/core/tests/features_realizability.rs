mod common;

use common::{close, max_abs_diff, Raw};
use dovi::experiments::gallery;
use dovi::features::{
    build_backdoor_features, build_frontdoor_features, check_realizability, FeatureMap,
};
use dovi::mdp::{ConfoundedMdp, Shape};
use dovi::Error;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[test]
fn bd2_adjusted_feature_reproduces_causal_kernel() {
    let mdp = gallery("BD-2").unwrap();
    let f = build_backdoor_features(&mdp).unwrap();
    assert_eq!(f.dim, 2 * 2 * 2);
    assert!(close(dot(f.psi(0, 0, 0), &f.mu[0][1]), 0.5, 1e-12));
    let raw = Raw::new(&mdp);
    for h in 0..2 {
        for s in 0..2 {
            for a in 0..2 {
                let via_psi: Vec<f64> = (0..2).map(|s2| dot(f.psi(h, s, a), &f.mu[h][s2])).collect();
                assert!(max_abs_diff(&via_psi, &raw.do_kernel(h, s, a)) <= 1e-12);
                assert!(close(dot(f.psi(h, s, a), &f.theta[h]), raw.do_reward(h, s, a), 1e-12));
            }
        }
    }
}

#[test]
fn one_hot_selects_the_observed_kernel_row() {
    for name in ["BD-2", "BD-COLLAPSE", "CH-2", "TRAP-2-H2"] {
        let mdp = gallery(name).unwrap();
        let f = build_backdoor_features(&mdp).unwrap();
        for h in 0..f.horizon {
            for s in 0..f.n_states {
                for a in 0..f.n_actions {
                    for u in 0..f.n_observed {
                        let phi = f.phi(h, s, a, u);
                        assert_eq!(norm(phi), 1.0);
                        assert_eq!(phi.iter().filter(|&&x| x != 0.0).count(), 1);
                        let row: Vec<f64> = (0..f.n_states).map(|s2| dot(phi, &f.mu[h][s2])).collect();
                        assert!(max_abs_diff(&row, &mdp.observed_next_dist(h, s, a, u)) <= 1e-12);
                        assert!(close(dot(phi, &f.theta[h]), mdp.observed_reward(h, s, a, u), 1e-12));
                    }
                }
            }
        }
    }
}

#[test]
fn adjusted_feature_places_observed_marginal_in_its_block() {
    for name in ["BD-2", "BD-COLLAPSE", "CH-2"] {
        let mdp = gallery(name).unwrap();
        let f = build_backdoor_features(&mdp).unwrap();
        for h in 0..f.horizon {
            for s in 0..f.n_states {
                let marginal = mdp.observed_marginal(h, s);
                for a in 0..f.n_actions {
                    let psi = f.psi(h, s, a);
                    assert!(norm(psi) <= 1.0 + 1e-15);
                    let mut expected = vec![0.0; f.dim];
                    for u in 0..f.n_observed {
                        expected[f.index(s, a, u)] = marginal[u];
                    }
                    assert_eq!(psi, &expected[..]);
                    let block: f64 = (0..f.n_observed).map(|u| psi[f.index(s, a, u)]).sum();
                    assert!(close(block, 1.0, 1e-12));
                }
            }
        }
    }
}

#[test]
fn single_observed_class_makes_adjustment_trivial() {
    let mdp = ConfoundedMdp::backdoor(
        "one-u",
        Shape {
            horizon: 1,
            n_states: 2,
            n_actions: 2,
            n_confounders: 2,
        },
        vec![0, 0],
        vec![0.5, 0.5],
        vec![0.3, 0.7, 0.6, 0.4],
        vec![0.5; 8],
        vec![0.5; 16],
        vec![0.25; 8],
    )
    .unwrap();
    let f = build_backdoor_features(&mdp).unwrap();
    assert_eq!(f.n_observed, 1);
    for s in 0..2 {
        for a in 0..2 {
            assert_eq!(f.psi(0, s, a), f.phi(0, s, a, 0));
        }
    }
}

#[test]
fn realizability_holds_on_every_gallery_instance() {
    for name in gallery::names().into_iter().chain(["CANON(3,1)".to_string()]) {
        let mdp = gallery(&name).unwrap();
        let fm = FeatureMap::build(&mdp).unwrap();
        let report = check_realizability(&mdp, &fm).unwrap();
        assert!(report.max_residual() <= 1e-12, "{name}: {:?}", report.identities);
        assert!(report.violations(1e-12).is_empty());
        assert!(report.max_feature_norm <= 1.0 + 1e-12);
        let expected = match fm {
            FeatureMap::Backdoor(_) => 5,
            FeatureMap::Frontdoor(_) => 7,
        };
        assert_eq!(report.identities.len(), expected, "{name}");
    }
}

#[test]
fn q_star_is_linear_in_adjusted_features() {
    let mdp = gallery("TRAP-2").unwrap();
    let fm = FeatureMap::build(&mdp).unwrap();
    let report = check_realizability(&mdp, &fm).unwrap();
    let q = report.identities.iter().find(|c| c.identity == "Q* linear in psi").unwrap();
    assert!(q.max_residual <= 1e-12);

    // Independent reconstruction of w*_h on BD-2.
    let mdp = gallery("BD-2").unwrap();
    let f = build_backdoor_features(&mdp).unwrap();
    let opt = mdp.optimal_values();
    for h in 0..f.horizon {
        let mut w = f.theta[h].clone();
        for s2 in 0..f.n_states {
            for (wi, mi) in w.iter_mut().zip(&f.mu[h][s2]) {
                *wi += mi * opt.v[h + 1][s2];
            }
        }
        for s in 0..f.n_states {
            for a in 0..f.n_actions {
                assert!(close(dot(f.psi(h, s, a), &w), opt.q[h][s * f.n_actions + a], 1e-12));
            }
        }
    }
}

#[test]
fn corrupted_mu_is_reported_with_identity_and_tuple() {
    let mdp = gallery("BD-2").unwrap();
    let mut f = build_backdoor_features(&mdp).unwrap();
    let idx = f.index(1, 0, 1);
    f.mu[1][0][idx] += 0.1;
    let report = check_realizability(&mdp, &FeatureMap::Backdoor(f)).unwrap();
    let bad = report.violations(1e-12);
    let names: Vec<&str> = bad.iter().map(|c| c.identity).collect();
    assert!(names.contains(&"kernel <phi, mu> = P(s'|s,a,u)"), "{names:?}");
    let kernel = bad.iter().find(|c| c.identity.starts_with("kernel")).unwrap();
    assert!(close(kernel.max_residual, 0.1, 1e-12));
    assert!(kernel.worst.contains("h=1 s=1 a=0 u=1 s'=0"), "{}", kernel.worst);
}

#[test]
fn corrupted_frontdoor_mubar_is_reported() {
    let mdp = gallery("FD-2").unwrap();
    let mut f = build_frontdoor_features(&mdp).unwrap();
    let idx = f.action_index(0, 1);
    f.mubar[0][1][idx] += 0.1;
    let report = check_realizability(&mdp, &FeatureMap::Frontdoor(f)).unwrap();
    let names: Vec<&str> = report.violations(1e-12).iter().map(|c| c.identity).collect();
    assert!(names.contains(&"intermediate <gamma, mubar> = P(m|s,a)"), "{names:?}");
}

#[test]
fn mode_mismatch_is_rejected() {
    let bd = gallery("BD-2").unwrap();
    let fd = gallery("FD-2").unwrap();
    assert!(matches!(build_backdoor_features(&fd), Err(Error::ModeMismatch { .. })));
    assert!(matches!(build_frontdoor_features(&bd), Err(Error::ModeMismatch { .. })));
    let fm = FeatureMap::build(&fd).unwrap();
    assert!(matches!(check_realizability(&bd, &fm), Err(Error::ModeMismatch { .. })));
}

#[test]
fn fd2_conditional_feature_matches_bayes_enumeration() {
    let mdp = gallery("FD-2").unwrap();
    let raw = Raw::new(&mdp);
    let f = build_frontdoor_features(&mdp).unwrap();
    assert_eq!(f.dim_mediator, 2 * 2 * 2);
    assert_eq!(f.dim_action, 4);
    assert_eq!(f.dim(), 8);
    for h in 0..2 {
        for s in 0..2 {
            for a in 0..2 {
                let gamma = f.gamma(h, s, a);
                assert_eq!(norm(gamma), 1.0);
                let itrans: Vec<f64> = (0..2).map(|m| dot(gamma, &f.mubar[h][m])).collect();
                assert!(max_abs_diff(&itrans, &[raw.itrans(h, s, a, 0), raw.itrans(h, s, a, 1)]) <= 1e-12);
                for m in 0..2 {
                    let row: Vec<f64> = (0..2).map(|s2| dot(f.phi(h, s, a, m), &f.mu[h][s2])).collect();
                    assert!(max_abs_diff(&row, &raw.frontdoor_conditional(h, s, a, m)) <= 1e-12);
                }
            }
            for m in 0..2 {
                let psi = f.psi(h, s, m);
                let effect: Vec<f64> = (0..2)
                    .map(|s2| (0..2).map(|w| raw.conf(h, s, w) * raw.ftrans(h, s, m, w, s2)).sum())
                    .collect();
                let row: Vec<f64> = (0..2).map(|s2| dot(psi, &f.mu[h][s2])).collect();
                assert!(max_abs_diff(&row, &effect) <= 1e-12);
                for w in 0..2 {
                    assert_eq!(norm(f.rho(h, s, m, w)), 1.0);
                    assert!(close(psi[f.mediator_index(s, m, w)], raw.conf(h, s, w), 1e-15));
                }
            }
        }
    }
}

fn frontdoor(behavior: Vec<f64>, conf: Vec<f64>) -> ConfoundedMdp {
    ConfoundedMdp::frontdoor(
        "fd",
        Shape {
            horizon: 1,
            n_states: 1,
            n_actions: 2,
            n_confounders: 2,
        },
        2,
        vec![1.0],
        conf,
        behavior,
        vec![0.7, 0.3, 0.2, 0.8],
        vec![0.6, 0.4, 0.1, 0.9],
        vec![0.0, 1.0],
    )
    .unwrap()
}

#[test]
fn blind_behavior_collapses_conditional_to_effect() {
    let mdp = frontdoor(vec![0.4, 0.6, 0.4, 0.6], vec![0.3, 0.7]);
    let f = build_frontdoor_features(&mdp).unwrap();
    for a in 0..2 {
        for m in 0..2 {
            assert!(max_abs_diff(f.phi(0, 0, a, m), f.psi(0, 0, m)) <= 1e-15);
        }
    }
}

#[test]
fn point_mass_confounder_makes_effect_feature_one_hot() {
    let mdp = frontdoor(vec![0.4, 0.6, 0.9, 0.1], vec![0.0, 1.0]);
    let f = build_frontdoor_features(&mdp).unwrap();
    for m in 0..2 {
        assert_eq!(f.psi(0, 0, m), f.rho(0, 0, m, 1));
    }
}

#[test]
fn frontdoor_features_need_behavior_support() {
    let mdp = frontdoor(vec![1.0, 0.0, 1.0, 0.0], vec![0.5, 0.5]);
    assert!(matches!(build_frontdoor_features(&mdp), Err(Error::UnsupportedAction { .. })));
}

#[test]
fn norm_bounds_are_reported_not_enforced() {
    let mdp = gallery("BD-2").unwrap();
    let fm = FeatureMap::build(&mdp).unwrap();
    let report = check_realizability(&mdp, &fm).unwrap();
    assert_eq!(report.dim, 8);
    assert_eq!(report.mu_mass.len(), 2);
    // Coordinate i of μ_h is a measure over next states; with one-hot
    // features it is a kernel row, so each squared mass is 1 and the sum is d.
    let f = build_backdoor_features(&mdp).unwrap();
    for h in 0..2 {
        let mass: f64 = (0..f.dim)
            .map(|i| f.mu[h].iter().map(|m| m[i].abs()).sum::<f64>().powi(2))
            .sum();
        assert!(close(mass, 8.0, 1e-12));
        assert!(close(report.mu_mass[h], mass, 1e-12));
    }
    let theta = f.theta.iter().map(|t| norm(t)).fold(0.0, f64::max);
    assert!(close(report.max_theta_norm, theta, 1e-12));
    let holds = report.mu_mass.iter().all(|&m| m <= 8.0 + 1e-9) && theta <= 8f64.sqrt() + 1e-12;
    assert_eq!(report.norm_bounds_hold(), holds);
}

#[test]
fn dump_lists_vectors_in_index_order() {
    let mdp = gallery("TRAP-2").unwrap();
    let dump = FeatureMap::build(&mdp).unwrap().render_dump();
    let lines: Vec<&str> = dump.lines().collect();
    assert_eq!(lines[0], "# feature map: backdoor");
    assert_eq!(lines[1], "dim = 4");
    assert_eq!(lines[3], "phi 0 0 0 0 : 1.0 0.0 0.0 0.0");
    assert!(lines.contains(&"psi 0 0 1 : 0.0 0.0 0.5 0.5"), "{dump}");
    assert!(lines.contains(&"theta 0 : 1.0 0.0 0.0 1.0"));
    let fd = FeatureMap::build(&gallery("FD-2").unwrap()).unwrap().render_dump();
    assert!(fd.starts_with("# feature map: frontdoor\ndim_mediator = 8\ndim_action = 4\n"));
}
