use billiard_core::acceptance::{run_criterion, AcceptanceOptions};
use billiard_core::Scene;

fn main() {
    let scene = Scene::symmetric_two_spheres();
    let opts = AcceptanceOptions::default();
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for id in 1..=10u8 {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let r = run_criterion(id, &scene, &opts);
        println!("{r}");
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
