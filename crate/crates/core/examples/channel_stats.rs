//! Draws fading grids at a few correlation widths and prints their mean
//! power and the correlation between neighbouring subcarriers.

use lam_msc::channel::gen_channel;

fn main() -> anyhow::Result<()> {
    println!("sigma  mean_power  neighbour_corr");
    for sigma in [0.0, 1.0, 2.0, 4.0, 8.0] {
        let (mut power, mut corr) = (0.0, 0.0);
        let draws = 50;
        for seed in 0..draws {
            let h = gen_channel(seed, 32, 32, sigma, sigma)?.gains;
            let v = h.values();
            power += h.mean_power();
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for i in 0..v.len() - 1 {
                num += f64::from((v[i] * v[i + 1].conj()).re);
                den += f64::from(v[i].norm_sqr());
            }
            corr += num / den;
        }
        println!("{sigma:>5}  {:>10.4}  {:>14.4}", power / draws as f64, corr / draws as f64);
    }
    Ok(())
}
