//! Gnuplot scripts for the standard figures. They are written, never run.

const PREAMBLE: &str = "set datafile separator ','\nset key top left\nset grid\n";

pub fn spectral_gap(csv: &str, perturbed: Option<&str>) -> String {
    let mut s = format!(
        "{PREAMBLE}set terminal pngcairo size 800,600\nset output 'spectral_gap.png'\n\
         set logscale xy\nset xlabel 'epsilon'\nset ylabel '1 - rho(P_eps)'\n\
         f(x) = c * x**2\nc = 1\nfit f(x) '{csv}' using 1:2 skip 1 via c\n\
         plot '{csv}' using 1:2 skip 1 with linespoints title '1 - rho', \\\n     f(x) title 'c eps^2'"
    );
    if let Some(p) = perturbed {
        s.push_str(&format!(", \\\n     '{p}' using 1:2 skip 1 with linespoints title 'perturbed'"));
    }
    s.push('\n');
    s
}

pub fn stability(csv: &str) -> String {
    format!(
        "{PREAMBLE}set terminal pngcairo size 800,600\nset output 'stability.png'\n\
         set logscale x\nset xlabel 'epsilon'\nset ylabel 'L1 stability ratio'\n\
         plot '{csv}' using 1:4 skip 1 with linespoints title 'weighted', \\\n     \
         '{csv}' using 1:7 skip 1 with linespoints title 'unweighted'\n"
    )
}

pub fn diffusion_limit(csv: &str) -> String {
    format!(
        "{PREAMBLE}set terminal pngcairo size 800,600\nset output 'diffusion_limit.png'\n\
         set logscale xy\nset xlabel 'epsilon'\nset ylabel 'interior sup |<u_eps> - U|'\n\
         plot '{csv}' using 1:2 skip 1 with linespoints title 'error', \\\n     \
         '{csv}' using 1:1 skip 1 with lines dashtype 2 title 'eps'\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_reference_their_tables() {
        assert!(spectral_gap("scan.csv", None).contains("'scan.csv' using 1:2"));
        assert!(spectral_gap("scan.csv", Some("p.csv")).contains("'p.csv'"));
        assert!(stability("s.csv").contains("using 1:7"));
        assert!(diffusion_limit("d.csv").contains("logscale xy"));
    }
}
