use grmc::data::synthesize_network;
use grmc::graph::{
    build_spatial_graph, build_temporal_graph, LagSet, LagWeight, SpatialGraphConfig,
};

#[test]
fn altitude_limit_only_changes_steep_edges() {
    let (_, meta) = synthesize_network(50, 1, 12).unwrap();
    let threshold = 100.0;
    let free = build_spatial_graph(
        &meta,
        &SpatialGraphConfig {
            weighted: true,
            ..SpatialGraphConfig::knn(3)
        },
    )
    .unwrap();
    let limited = build_spatial_graph(
        &meta,
        &SpatialGraphConfig {
            weighted: true,
            altitude_limit: true,
            altitude_threshold: threshold,
            ..SpatialGraphConfig::knn(3)
        },
    )
    .unwrap();
    let steep = |a: usize, b: usize| (meta[a].altitude - meta[b].altitude).abs() > threshold;
    for &(a, b, _) in limited.edges() {
        assert!(!steep(a, b), "limited graph keeps steep edge ({a}, {b})");
    }
    for &(a, b, _) in free.edges() {
        if !limited.has_edge(a, b) {
            assert!(
                steep(a, b),
                "edge ({a}, {b}) dropped without exceeding the limit"
            );
        }
    }
    // the terrain has relief, so the limit must matter somewhere
    assert_ne!(free.edges(), limited.edges());
}

#[test]
fn lag_graph_examples() {
    let one = build_temporal_graph(4, &LagSet::parse("1", LagWeight::Unit).unwrap()).unwrap();
    assert_eq!(one.edges(), &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);

    let three = build_temporal_graph(4, &LagSet::parse("1,2,3", LagWeight::Unit).unwrap()).unwrap();
    assert_eq!(three.n_edges(), 6);

    let inverse =
        build_temporal_graph(4, &LagSet::parse("1,2,3", LagWeight::InverseLag).unwrap()).unwrap();
    for &(a, b, w) in inverse.edges() {
        assert_eq!(w, 1.0 / (b - a) as f64);
    }
}

#[test]
fn laplacian_rows_sum_to_zero() {
    let (_, meta) = synthesize_network(30, 1, 3).unwrap();
    let g = build_spatial_graph(
        &meta,
        &SpatialGraphConfig {
            weighted: true,
            ..SpatialGraphConfig::knn(4)
        },
    )
    .unwrap();
    let dense = g.laplacian().to_dense();
    for row in dense.row_iter() {
        assert!(row.sum().abs() < 1e-12);
    }
    assert_eq!(dense, dense.transpose());
}
