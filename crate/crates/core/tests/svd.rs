use bandred::bench::gen_general;
use bandred::oracle::{band_check, jacobi_svd, spectra_match};
use bandred::runtime::Group;
use bandred::svd::{
    reduce_band_svd, reduce_traced, reduce_tri_band, SvdConfig, SvdForm, SvdV2Mapping, SvdVariant,
};
use bandred::{ExecGroups, Matrix};
use proptest::prelude::*;

const ALL: [SvdVariant; 4] = [
    SvdVariant::Reference,
    SvdVariant::Simultaneous,
    SvdVariant::V1,
    SvdVariant::V2,
];

fn groups(total: usize, ts: usize) -> ExecGroups {
    ExecGroups::new(total, ts).unwrap()
}

fn sv_check(a: &Matrix, out: &Matrix) {
    let want = jacobi_svd(a).unwrap();
    let got = jacobi_svd(out).unwrap();
    let (ok, dev) = spectra_match(&want, &got, 1e-11 * want[0]);
    assert!(ok, "deviation {dev:e}");
}

#[test]
fn tri_band_random_10x6() {
    let a = gen_general(10, 6, 3).unwrap();
    let r = reduce_tri_band(&a, 2, 2).unwrap();
    assert_eq!(r.form, SvdForm::TriangularBand);
    assert_eq!(band_check(&r.band, 0, 2), 0.0);
    sv_check(&a, &r.band);
}

#[test]
fn tri_band_with_block_below_bandwidth() {
    let a = gen_general(20, 14, 8).unwrap();
    for (w, b) in [(3, 1), (4, 2), (5, 2), (6, 3)] {
        let r = reduce_tri_band(&a, w, b).unwrap();
        assert_eq!(band_check(&r.band, 0, w), 0.0);
        sv_check(&a, &r.band);
    }
}

#[test]
fn tri_band_input_returned_up_to_signs() {
    let a = gen_general(9, 7, 1).unwrap();
    let tb = Matrix::from_fn(
        9,
        7,
        |i, j| if i <= j && j <= i + 2 { a[(i, j)] } else { 0.0 },
    );
    let r = reduce_tri_band(&tb, 2, 2).unwrap();
    for j in 0..7 {
        for i in 0..9 {
            assert!(
                (r.band[(i, j)].abs() - tb[(i, j)].abs()).abs() <= 1e-14,
                "({i},{j})"
            );
        }
    }
}

#[test]
fn tri_band_rejects_wide_and_lookahead() {
    let a = gen_general(4, 6, 1).unwrap();
    assert!(reduce_tri_band(&a, 2, 2).is_err());
    let a = gen_general(6, 6, 1).unwrap();
    let cfg = SvdConfig::new(2, 2, SvdForm::TriangularBand, SvdVariant::V1);
    assert!(reduce_band_svd(&a, &cfg, groups(1, 0)).is_err());
}

#[test]
fn band_diagonal_is_unchanged() {
    let a = Matrix::diag(&[3.0, -2.0, 1.0, 5.0, 4.0, 0.5, 2.0, 7.0]);
    for v in ALL {
        let cfg = SvdConfig::band(2, 1, v);
        let r = reduce_band_svd(&a, &cfg, groups(2, 1)).unwrap();
        assert_eq!(r.band, a, "{v:?}");
    }
}

#[test]
fn reference_and_simultaneous_24x20() {
    let a = gen_general(24, 20, 5).unwrap();
    let r = reduce_band_svd(
        &a,
        &SvdConfig::band(4, 4, SvdVariant::Reference),
        groups(1, 0),
    )
    .unwrap();
    let s = reduce_band_svd(
        &a,
        &SvdConfig::band(4, 4, SvdVariant::Simultaneous),
        groups(1, 0),
    )
    .unwrap();
    assert!(r.band.sub_matrix(&s.band).frobenius() <= 1e-12 * a.frobenius());
}

#[test]
fn band_30x30_w6_b3_all_variants() {
    let a = gen_general(30, 30, 12).unwrap();
    for v in ALL {
        let r = reduce_band_svd(&a, &SvdConfig::band(6, 3, v), groups(3, 1)).unwrap();
        assert_eq!(band_check(&r.band, 6, 6), 0.0, "{v:?}");
        sv_check(&a, &r.band);
    }
}

#[test]
fn v2_40x36_w4_b3_and_mappings() {
    let a = gen_general(40, 36, 6).unwrap();
    let base = SvdConfig::band(4, 3, SvdVariant::V2);
    let x = reduce_band_svd(&a, &base, groups(3, 1)).unwrap();
    sv_check(&a, &x.band);
    let y = reduce_band_svd(
        &a,
        &base.with_mapping(SvdV2Mapping::B1C1OnAll),
        groups(3, 1),
    )
    .unwrap();
    assert!(x.band.sub_matrix(&y.band).frobenius() <= 1e-13 * a.frobenius());
}

#[test]
fn wide_input_is_transposed() {
    let a = gen_general(12, 20, 2).unwrap();
    for v in ALL {
        let r = reduce_band_svd(&a, &SvdConfig::band(4, 2, v), groups(2, 1)).unwrap();
        assert_eq!((r.band.rows(), r.band.cols()), (12, 20));
        assert_eq!(band_check(&r.band, 4, 4), 0.0);
        sv_check(&a, &r.band);
    }
}

#[test]
fn v1_next_qr_waits_for_b1l() {
    let a = gen_general(36, 30, 4).unwrap();
    let (_, tr) = reduce_traced(&a, &SvdConfig::band(6, 2, SvdVariant::V1), groups(3, 1)).unwrap();
    let mut seen = 0;
    for e in tr
        .events
        .iter()
        .filter(|e| e.task_id.starts_with("qr@") && e.iter > 0)
    {
        let b1l = tr.find(&format!("b1l@{}", e.iter - 1)).unwrap();
        assert!(e.start > b1l.end);
        assert_eq!(e.group, Group::Ts);
        seen += 1;
    }
    assert!(seen > 5);
}

#[test]
fn v2_phase_groups_disjoint() {
    let a = gen_general(30, 26, 4).unwrap();
    let (_, tr) = reduce_traced(&a, &SvdConfig::band(4, 3, SvdVariant::V2), groups(3, 1)).unwrap();
    for p in tr.phases() {
        let evs: Vec<_> = tr.phase(p).collect();
        for s in evs.iter().filter(|e| e.group == Group::Ts) {
            for t in evs.iter().filter(|e| e.group == Group::Tp) {
                for x in &s.writes {
                    for y in &t.writes {
                        assert!(!x.intersects(y));
                    }
                }
            }
        }
    }
}

fn fused_dense_check(m: usize, n: usize, seed: u64) {
    // One band step through the fused path equals explicit Uᵀ D V.
    use bandred::flops::FlopCounter;
    use bandred::householder::{apply_wy_left, apply_wy_right, qr_panel};
    use bandred::kernels::Ctx;
    let fc = FlopCounter::new();
    let ctx = Ctx::new(1, &fc);
    let mut pu = gen_general(m, 2, seed).unwrap();
    let mut pv = gen_general(n, 2, seed + 1).unwrap();
    let fu = qr_panel(ctx, pu.view_mut(), 16).unwrap();
    let fv = qr_panel(ctx, pv.view_mut(), 16).unwrap();
    let d = gen_general(m, n, seed + 2).unwrap();
    let mut dense = d.clone();
    apply_wy_left(ctx, dense.view_mut(), &fu).unwrap();
    apply_wy_right(ctx, dense.view_mut(), &fv).unwrap();
    let zl = Matrix::from_fn(n, 2, |i, c| (0..m).map(|p| d[(p, i)] * fu.w[(p, c)]).sum());
    let zr = Matrix::from_fn(m, 2, |i, c| (0..n).map(|p| d[(i, p)] * fv.w[(p, c)]).sum());
    let s = Matrix::from_fn(2, 2, |i, j| (0..n).map(|p| zl[(p, i)] * fv.w[(p, j)]).sum());
    let x = Matrix::from_fn(m, 2, |i, j| {
        zr[(i, j)] + (0..2).map(|p| fu.y[(i, p)] * s[(p, j)]).sum::<f64>()
    });
    let fused = Matrix::from_fn(m, n, |i, j| {
        d[(i, j)]
            + (0..2).map(|p| x[(i, p)] * fv.y[(j, p)]).sum::<f64>()
            + (0..2).map(|p| fu.y[(i, p)] * zl[(j, p)]).sum::<f64>()
    });
    assert!(fused.sub_matrix(&dense).frobenius() <= 1e-12 * d.frobenius());
}

#[test]
fn fused_update_algebra() {
    for (m, n, s) in [(7, 5, 1), (12, 12, 2), (9, 4, 3)] {
        fused_dense_check(m, n, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn band_variants_agree(m in 6usize..26, n in 6usize..26, w in 1usize..6, bsel in 0usize..6,
                           seed in 0u64..1000, ts in 0usize..2) {
        let b = 1 + bsel % w;
        let a = gen_general(m, n, seed).unwrap();
        let g = ExecGroups::new(3, ts).unwrap();
        let r = reduce_band_svd(&a, &SvdConfig::band(w, b, SvdVariant::Reference), g).unwrap();
        let s = reduce_band_svd(&a, &SvdConfig::band(w, b, SvdVariant::Simultaneous), g).unwrap();
        let v2 = reduce_band_svd(&a, &SvdConfig::band(w, b, SvdVariant::V2), g).unwrap();
        prop_assert!(v2.band.bit_eq(&s.band));
        prop_assert!(r.band.sub_matrix(&s.band).frobenius() <= 1e-12 * a.frobenius());
        prop_assert_eq!(band_check(&r.band, w, w), 0.0);
        if 2 * b <= w {
            let v1 = reduce_band_svd(&a, &SvdConfig::band(w, b, SvdVariant::V1), g).unwrap();
            prop_assert!(v1.band.bit_eq(&r.band));
        }
    }

    #[test]
    fn frobenius_norm_preserved(m in 4usize..24, dn in 0usize..8, w in 1usize..5, seed in 0u64..500,
                                tri in proptest::bool::ANY) {
        let n = m.saturating_sub(dn).max(1);
        let a = gen_general(m, n, seed).unwrap();
        let r = if tri {
            reduce_tri_band(&a, w, w).unwrap()
        } else {
            reduce_band_svd(&a, &SvdConfig::band(w, 1, SvdVariant::Reference), ExecGroups::new(1, 0).unwrap()).unwrap()
        };
        prop_assert!((r.band.frobenius() - a.frobenius()).abs() <= 1e-12 * a.frobenius());
    }
}
