//! Built-in scenario graphs against hand-derived expectations.

use assumption_lab::graph::{d_separated, i_set, moralize, CiQuery};
use assumption_lab::scenarios::Scenario;

fn names(sc: &Scenario, ids: impl IntoIterator<Item = usize>) -> Vec<String> {
    ids.into_iter().map(|i| sc.dag().name(i).to_string()).collect()
}

#[test]
fn instrumental_variables_moral_graph() {
    let sc = Scenario::by_name("instrumental-variables").unwrap();
    let g = sc.dag();
    let mut edges: Vec<(String, String)> = moralize(g)
        .edges()
        .into_iter()
        .map(|(a, b)| {
            let (a, b) = (g.name(a).to_string(), g.name(b).to_string());
            if a < b { (a, b) } else { (b, a) }
        })
        .collect();
    edges.sort();
    let text: Vec<String> = edges.iter().map(|(a, b)| format!("{a} -- {b}")).collect();
    let golden = include_str!("golden/iv_moral_graph.txt");
    assert_eq!(text.join("\n") + "\n", golden);
}

#[test]
fn context_reaches_the_statistics_only_where_declared() {
    for (name, separable) in [("contaminated-gaussian", false), ("confounded-causal", true), ("instrumental-variables", true)] {
        let sc = Scenario::by_name(name).unwrap();
        let r = sc.g_separability().unwrap();
        assert_eq!(r.separable, separable, "{name}");
        assert_eq!(r.witness.is_some(), !separable, "{name}");
    }
    let sc = Scenario::by_name("contaminated-gaussian").unwrap();
    assert_eq!(names(&sc, i_set(sc.dag())), ["omega1", "omega2"]);
}

#[test]
fn context_and_confounder_meet_only_at_colliders() {
    let sc = Scenario::by_name("instrumental-variables").unwrap();
    let g = sc.dag();
    let idx = |n: &str| g.index(n).unwrap();
    let (theta, u) = (idx("theta"), idx("u"));
    assert!(d_separated(g, &CiQuery::new(vec![theta], vec![u], vec![])).unwrap());
    assert!(!d_separated(g, &CiQuery::new(vec![theta], vec![u], vec![idx("s1")])).unwrap());
    assert!(!d_separated(g, &CiQuery::new(vec![idx("s1")], vec![idx("s3")], vec![])).unwrap());
}
