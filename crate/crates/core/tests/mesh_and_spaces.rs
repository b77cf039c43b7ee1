use proptest::prelude::*;
use sdcouple::fespace::{ElementPair, ScalarFamily, ScalarSpace};
use sdcouple::mesh::{CoupledMesh, MeshHierarchy, Subdomain};

fn area(mesh: &CoupledMesh, dom: Subdomain) -> f64 {
    mesh.triangles_in(dom).map(|t| mesh.signed_area(t)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn subdomain_areas_are_one_half(k in 1usize..20) {
        let mesh = CoupledMesh::unit_square(2 * k).unwrap();
        for dom in [Subdomain::Stokes, Subdomain::Darcy] {
            prop_assert!((area(&mesh, dom) - 0.5).abs() < 1e-12);
        }
        prop_assert!((0..mesh.triangles().len()).all(|t| mesh.signed_area(t) > 0.0));
    }

    #[test]
    fn euler_relation_per_subdomain(k in 1usize..20) {
        let mesh = CoupledMesh::unit_square(2 * k).unwrap();
        for dom in [Subdomain::Stokes, Subdomain::Darcy] {
            let (v, e, t) = mesh.euler_counts(dom);
            prop_assert_eq!(v as i64 - e as i64 + t as i64, 1);
        }
    }

    #[test]
    fn refinement_quadruples_triangles_and_keeps_parents(k in 1usize..12) {
        let coarse = CoupledMesh::unit_square(2 * k).unwrap();
        let fine = coarse.refine_uniform();
        prop_assert_eq!(fine.n(), 4 * k);
        prop_assert_eq!(fine.triangles().len(), 4 * coarse.triangles().len());
        let parent = fine.parent().unwrap();
        for t in 0..fine.triangles().len() {
            prop_assert_eq!(fine.domain(t), coarse.domain(parent[t]));
        }
    }
}

#[test]
fn refined_mesh_has_the_structured_counts() {
    let h = MeshHierarchy::new(16).unwrap();
    let fine = h.finest();
    assert_eq!(fine.n(), 16);
    assert_eq!(fine.triangles().len(), 2 * 16 * 16);
    assert_eq!(fine.vertices().len(), 17 * 17);
    assert!((fine.h() - 1.0 / 16.0).abs() < 1e-15);
}

#[test]
fn published_dof_counts() {
    let expected = [
        (ElementPair::MiniBdm1, [543, 2043, 7923, 31203]),
        (ElementPair::P2isoP1Bdm1, [385, 1423, 5467, 21427]),
        (ElementPair::TaylorHoodRt1, [887, 3371, 13139, 51875]),
    ];
    for (pair, counts) in expected {
        for (n, dofs) in [8, 16, 32, 64].into_iter().zip(counts) {
            let sp = sdcouple::fespace::Spaces::new(pair, n).unwrap();
            assert_eq!(sp.total_dofs(), dofs, "{pair} n={n}");
        }
    }
}

#[test]
fn p2isop1_velocity_is_linear_on_the_fine_mesh() {
    let sp = sdcouple::fespace::Spaces::new(ElementPair::P2isoP1Bdm1, 16).unwrap();
    let p1 = ScalarSpace::new(sp.mesh(), ScalarFamily::P1c, Subdomain::Stokes);
    assert_eq!(sp.velocity.ndofs(), p1.ndofs());
    assert_eq!(sp.velocity.ndofs(), 17 * 9);
    // pressure lives on the mesh with half the subdivisions
    assert_eq!(sp.pressure.ndofs(), 9 * 5);
}
