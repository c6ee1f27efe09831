mod common;

use common::*;

#[test]
fn fmm_between_dijkstra_bounds_and_paths_near_optimal() {
    match fmm_sandwich() {
        Ok(detail) => println!("{detail}"),
        Err(e) => panic!("{e}"),
    }
}
