//! Gnuplot scripts referencing the CSV tables written next to them.

const HEADER: &str = "set datafile separator ','\nset key autotitle columnhead\n";

fn script(name: &str, body: String) -> (String, String) {
    (format!("{name}.gp"), format!("{HEADER}{body}"))
}

pub fn margins(check: &str) -> (String, String) {
    script(
        check,
        format!(
            "set xlabel 'point index'\nset ylabel 'margin'\nplot '{check}.csv' using 1:2 with points pt 7 ps 0.4 title 'margin', 0 with lines dt 2 notitle\n"
        ),
    )
}

pub fn log_area() -> (String, String) {
    script(
        "expansion",
        "set xlabel 't'\nset ylabel 'mean of min log area'\nplot 'expansion.csv' using 1:2 with linespoints\n".into(),
    )
}

/// First coordinate of each crossing against that of its return.
pub fn return_map(dim: usize) -> (String, String) {
    let rx = 3 + dim;
    script(
        "poincare",
        format!("set xlabel 'x1'\nset ylabel 'R(x)1'\nplot 'poincare.csv' using 3:{rx} with points pt 7 ps 0.3 notitle\n"),
    )
}

pub fn roof(c: Option<f64>, b: Option<f64>) -> (String, String) {
    let fit = match (c, b) {
        (Some(c), Some(b)) => format!(", {c:e}*x + {b:e} with lines title 'fit'"),
        _ => String::new(),
    };
    script(
        "roof",
        format!("set xlabel '-ln dist'\nset ylabel 'tau'\nplot 'roof.csv' using (-log($1)):2 with points pt 7 title 'samples'{fit}\n"),
    )
}

pub fn growth() -> (String, String) {
    script(
        "growth",
        "set logscale y\nset xlabel 'return'\nset ylabel 'leaf distance'\nplot 'growth.csv' using 2:3 with points pt 7 ps 0.3 notitle\n".into(),
    )
}

pub fn histogram() -> (String, String) {
    script(
        "quotient",
        "bin(x, w) = w * floor(x / w)\nset boxwidth 0.05\nset xlabel 'expansion factor'\nplot 'quotient.csv' using (bin($1, 0.05)):(1.0) smooth freq with boxes notitle\n".into(),
    )
}

/// The first counterexample pair in the first two coordinates.
pub fn counterexample(dim: usize) -> (String, String) {
    let (a, b) = if dim >= 2 { (2, 3) } else { (1, 2) };
    script(
        "counterexample",
        format!(
            "plot 'counterexample_0_x.csv' using {a}:{b} with lines title 'x', 'counterexample_0_y.csv' using {a}:{b} with lines title 'y'\n"
        ),
    )
}
