use std::sync::Arc;

use proptest::prelude::*;
use qfa::estimators::{fit_sar, lw_estimate, sar_spectrum, Window};
use qfa::io::{
    decode, encode, read_container, read_series_csv, read_spectrum, write_container, write_series_csv,
    write_spectrum_csv, Container,
};
use qfa::qdft::{qacf, qdft, qper, qser};
use qfa::series::{fourier_frequencies, MultiSeries, QuantileGrid};
use qfa::sim::gen_mixture;
use qfa::spline::SplineBasis;
use qfa::Error;

fn all_kinds() -> Vec<Container> {
    let y = gen_mixture(96, 2).unwrap();
    let grid = QuantileGrid::new(vec![0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    let q = qdft(&y, &grid).unwrap();
    let qs = qser(&q).unwrap();
    let acf = qacf(&qs, 8).unwrap();
    let basis = Arc::new(SplineBasis::new(grid.levels()).unwrap());
    let model = fit_sar(&qs, 2, 0.05, &basis).unwrap();
    let lw = lw_estimate(&acf, 6, Window::TukeyHanning, &fourier_frequencies(96)).unwrap();
    vec![
        Container::Qdft(q.clone()),
        Container::Qser(qs),
        Container::Qacf(acf),
        Container::Spectrum(qper(&q)),
        Container::Spectrum(lw),
        Container::Sar(model),
    ]
}

#[test]
fn every_kind_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, item) in all_kinds().into_iter().enumerate() {
        let path = dir.path().join(format!("item{i}.qfa"));
        write_container(&path, &item).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.kind(), item.kind());
        assert_eq!(encode(&back), std::fs::read(&path).unwrap(), "{}", item.kind_name());
        match (&item, &back) {
            (Container::Qdft(a), Container::Qdft(b)) => assert_eq!(a, b),
            (Container::Qser(a), Container::Qser(b)) => assert_eq!(a, b),
            (Container::Qacf(a), Container::Qacf(b)) => assert_eq!(a, b),
            (Container::Spectrum(a), Container::Spectrum(b)) => assert_eq!(a, b),
            (Container::Sar(a), Container::Sar(b)) => {
                assert_eq!(a.theta(), b.theta());
                assert_eq!(a.lambda(), b.lambda());
                assert_eq!(a.spar(), b.spar());
                for alpha in [0.1, 0.25, 0.5, 0.9] {
                    assert_eq!(a.coefficients_at(alpha), b.coefficients_at(alpha));
                    assert_eq!(a.residual_covariance(alpha), b.residual_covariance(alpha));
                }
                let freqs = fourier_frequencies(96);
                let grid = a.grid().clone();
                assert_eq!(sar_spectrum(a, &freqs, &grid).unwrap(), sar_spectrum(b, &freqs, &grid).unwrap());
            }
            _ => unreachable!(),
        }
    }
}

#[test]
fn corrupt_containers_are_rejected() {
    let bytes = encode(&all_kinds()[0]);
    for cut in [0, 3, 8, 20, bytes.len() - 1] {
        assert!(matches!(decode(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
    }
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(decode(&wrong).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(decode(&longer).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("acf.qfa");
    write_container(&path, &all_kinds()[2]).unwrap();
    assert!(read_spectrum(&path).is_err());
}

#[test]
fn spectrum_csv_has_one_row_per_entry() {
    let Container::Spectrum(s) = &all_kinds()[3] else { unreachable!() };
    let mut out = Vec::new();
    write_spectrum_csv(&mut out, s).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("f,alpha,j,k,re,im"));
    assert_eq!(lines.count(), s.freqs().len() * s.grid().len() * 4);
}

#[test]
fn names_and_comments_in_series_csv() {
    let body: String = (0..8).map(|t| format!("{t}, {}\n", -0.5 * t as f64)).collect();
    let s = read_series_csv(format!("# recorded\nx, y\n{body}").as_bytes()).unwrap();
    assert_eq!(s.channel_names().unwrap(), ["x", "y"]);
    assert_eq!(s.channel(1)[3], -1.5);
    assert!(read_series_csv(body.lines().take(7).collect::<Vec<_>>().join("\n").as_bytes()).is_err());
    assert!(read_series_csv("1,2\n3\n".as_bytes()).is_err());
    assert!(read_series_csv("a,b\n".as_bytes()).is_err());
    assert!(read_series_csv("1,NaN\n".as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn series_csv_round_trips_exactly(
        rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 8..40)
    ) {
        let series = MultiSeries::from_rows(&rows).unwrap();
        let mut out = Vec::new();
        write_series_csv(&mut out, &series).unwrap();
        let back = read_series_csv(out.as_slice()).unwrap();
        for j in 0..3 {
            prop_assert_eq!(back.channel(j), series.channel(j));
        }
    }
}
