use minipy::value::float_repr;
use minipy::{Kernel, NoHost};
use proptest::prelude::*;

fn eval(k: &mut Kernel, code: &str) -> String {
    let out = k.exec(code, None, &mut NoHost);
    assert!(out.ok, "{code}: {:?}", out.error);
    out.result_repr.unwrap_or_default()
}

proptest! {
    #[test]
    fn floor_division_and_modulo_agree(a in -10_000i64..10_000, b in prop::sample::select(vec![-7i64, -3, -1, 1, 2, 5, 13])) {
        let mut k = Kernel::new();
        let q: i64 = eval(&mut k, &format!("{a} // {b}")).parse().unwrap();
        let r: i64 = eval(&mut k, &format!("{a} % {b}")).parse().unwrap();
        prop_assert_eq!(q * b + r, a);
        prop_assert!(r == 0 || (r < 0) == (b < 0));
        prop_assert!(r.abs() < b.abs());
    }

    #[test]
    fn float_repr_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = float_repr(x);
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn sorted_matches_std_sort(mut xs in prop::collection::vec(-1000i64..1000, 0..40)) {
        let mut k = Kernel::new();
        let list = format!("{:?}", xs);
        let got = eval(&mut k, &format!("sorted({list})"));
        xs.sort();
        prop_assert_eq!(got, format!("{:?}", xs));
    }

    #[test]
    fn string_literals_round_trip_through_repr(s in "[ -~]{0,20}") {
        let mut k = Kernel::new();
        let lit = minipy::value::str_repr(&s);
        let got = eval(&mut k, &format!("x = {lit}\nx == {lit} and len(x) == {}", s.chars().count()));
        prop_assert_eq!(got, "True");
    }
}
