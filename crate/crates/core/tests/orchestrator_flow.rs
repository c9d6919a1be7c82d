//! End-to-end behavior of the synthesis loop on small databases with a
//! planted cross-table dependency: error should fall when the budget makes
//! noise negligible, workloads must never be bought twice, and the ledger
//! must spend exactly what the schedule plans.

use rand::Rng;
use relsyn_core::orchestrator::{evaluate, synthesize, SynthesisConfig};
use relsyn_core::projection::PgdConfig;
use relsyn_core::relational::{
    BiAdjacency, RelationKind, RelationalDatabase, Schema, Table,
};
use relsyn_core::rng::RngStreams;

fn random_table(n_rows: usize, n_features: usize, prefix: &str, seed: u64) -> Table {
    let schema = Schema::new(
        (0..n_features).map(|f| (format!("{prefix}{f}"), 2)).collect(),
    )
    .unwrap();
    let mut rng = RngStreams::new(seed).stream("table");
    let rows = (0..n_rows)
        .map(|_| (0..n_features).map(|_| usize::from(rng.gen_bool(0.5))).collect())
        .collect();
    Table::new(schema, rows).unwrap()
}

/// Edges prefer pairs that agree on the first feature, so the cross marginal
/// t1[x0] x t2[y0] carries real structure to learn.
fn planted_db(n: usize, n_features: usize, m: usize, seed: u64) -> RelationalDatabase {
    let table1 = random_table(n, n_features, "x", seed);
    let table2 = random_table(n, n_features, "y", seed ^ 0xabcd);
    let mut rng = RngStreams::new(seed ^ 0x77).stream("edges");
    let mut adjacency = BiAdjacency::new(n, n);
    while adjacency.edge_count() < m {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let p = if table1.row(i)[0] == table2.row(j)[0] { 0.9 } else { 0.1 };
        if rng.gen_bool(p) && !adjacency.contains(i, j) {
            adjacency.insert(i, j).unwrap();
        }
    }
    RelationalDatabase::new(table1, table2, adjacency, RelationKind::ManyToMany).unwrap()
}

fn base_config(n: usize, m_syn: usize) -> SynthesisConfig {
    SynthesisConfig {
        eps_rel: 1e6,
        delta_rel: 1e-9,
        iterations: 6,
        workloads_per_iteration: 2,
        alpha: 0.1,
        marginal_order: 2,
        m_syn,
        slice_rows: n,
        slice_cols: n,
        n_slices: 1,
        min_related_fraction: 0.2,
        top_error_workloads: 8,
        workload_subsample: None,
        pgd: PgdConfig { iterations: 200, ..Default::default() },
        seed: 424242,
        kind: RelationKind::ManyToMany,
    }
}

#[test]
fn high_budget_run_improves_cross_marginal_error() {
    let n = 30;
    let m = 90;
    let real = planted_db(n, 3, m, 9001);
    let syn1 = real.table1().clone();
    let syn2 = real.table2().clone();

    let mut cfg_init = base_config(n, m);
    cfg_init.iterations = 0;
    let (db_init, _) = synthesize(&real, &syn1, &syn2, &cfg_init).unwrap();
    let initial = evaluate(&real, &db_init, 2).unwrap();

    let cfg = base_config(n, m);
    let (db_final, report) = synthesize(&real, &syn1, &syn2, &cfg).unwrap();
    let final_eval = evaluate(&real, &db_final, 2).unwrap();

    assert!(
        final_eval.average_l1_error < initial.average_l1_error,
        "no improvement: {} -> {}",
        initial.average_l1_error,
        final_eval.average_l1_error
    );
    let planted = |eval: &relsyn_core::orchestrator::EvaluationReport| {
        eval.per_workload
            .iter()
            .find(|w| w.workload == "t1[x0] x t2[y0]")
            .expect("planted workload present")
            .l1_error
    };
    assert!(
        planted(&final_eval) < 0.5 * planted(&initial),
        "planted workload barely improved: {} -> {}",
        planted(&initial),
        planted(&final_eval)
    );
    assert_eq!(db_final.adjacency().edge_count(), m);
    assert!(db_final.validate_integrity().is_empty());
    assert_eq!(report.evaluation.average_l1_error, final_eval.average_l1_error);
}

#[test]
fn workloads_never_repeat_even_when_the_pool_runs_out() {
    // 3 binary features per side give 9 cross pairs; the schedule asks for
    // 12, so the pool drains and later iterations select fewer.
    let n = 20;
    let real = planted_db(n, 3, 50, 9002);
    let syn1 = real.table1().clone();
    let syn2 = real.table2().clone();
    let cfg = base_config(n, 50);
    let (_, report) = synthesize(&real, &syn1, &syn2, &cfg).unwrap();

    let mut seen = std::collections::HashSet::new();
    let mut total = 0;
    for it in &report.manifest.iterations {
        for w in &it.selected {
            total += 1;
            assert!(seen.insert(w.workload.clone()), "workload {} bought twice", w.workload);
        }
    }
    assert_eq!(total, 9, "every distinct workload gets bought exactly once");
    let ledger = &report.manifest.ledger;
    assert!(
        ledger.rho_spent() < ledger.rho_total(),
        "a drained pool must leave budget unspent"
    );
}

#[test]
fn full_schedule_spends_the_ledger_exactly() {
    // 4 features per side give 16 cross pairs, more than the 12 scheduled.
    let n = 16;
    let real = planted_db(n, 4, 40, 9003);
    let syn1 = real.table1().clone();
    let syn2 = real.table2().clone();
    let mut cfg = base_config(n, 40);
    cfg.iterations = 4;
    cfg.workloads_per_iteration = 3;
    cfg.eps_rel = 2.0;
    cfg.delta_rel = 1e-6;
    let (_, report) = synthesize(&real, &syn1, &syn2, &cfg).unwrap();

    let picked: usize = report.manifest.iterations.iter().map(|it| it.selected.len()).sum();
    assert_eq!(picked, 12);
    let ledger = &report.manifest.ledger;
    assert!(
        (ledger.rho_spent() - ledger.rho_total()).abs() <= 1e-12 * ledger.rho_total().max(1.0),
        "spent {} of {}",
        ledger.rho_spent(),
        ledger.rho_total()
    );
    assert_eq!(report.budget.rho_total, ledger.rho_total());
}

#[test]
fn one_to_many_partial_slices_keep_every_child_single_parent() {
    let n1 = 24;
    let n2 = 10;
    let table1 = random_table(n1, 3, "x", 9004);
    let table2 = random_table(n2, 3, "y", 9005);
    let mut rng = RngStreams::new(9006).stream("edges");
    let mut adjacency = BiAdjacency::new(n1, n2);
    for i in 0..n1 {
        adjacency.insert(i, rng.gen_range(0..n2)).unwrap();
    }
    let real =
        RelationalDatabase::new(table1, table2, adjacency, RelationKind::OneToMany).unwrap();
    let syn1 = real.table1().clone();
    let syn2 = real.table2().clone();

    let mut cfg = base_config(n1, n1);
    cfg.kind = RelationKind::OneToMany;
    cfg.iterations = 3;
    cfg.slice_rows = 10;
    cfg.slice_cols = 6;
    cfg.n_slices = 1;
    let (db, _) = synthesize(&real, &syn1, &syn2, &cfg).unwrap();
    assert_eq!(db.adjacency().edge_count(), n1);
    assert!(db.validate_integrity().is_empty());
    assert!(db.adjacency().row_degrees().iter().all(|&d| d == 1));
}
