// Regenerates the raster fixtures under tests/fixtures.
// Usage: gen_fixtures <fixture-dir>

#include "contourforge/io.hpp"
#include "contourforge/levelset.hpp"
#include "contourforge/morphology.hpp"
#include "contourforge/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

using namespace contourforge;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: gen_fixtures <fixture-dir>\n";
        return 2;
    }
    const fs::path dir = argv[1];
    fs::create_directories(dir);

    constexpr int n = 64;
    ScalarField ring(n, n, 1);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double r = std::hypot(x - 32.0, y - 32.0);
            ring.at(y, x) = std::exp(-(r - 10.0) * (r - 10.0) / 2.0);
        }
    }
    io::write_field(dir / "ring_prob.fpm", ring);
    const BinaryMask init = disc_mask(n, n, 32, 32, 5);
    io::write_mask(dir / "ring_init.pgm", init);
    Polygon square;
    square.vertices = {{27, 27}, {37, 27}, {37, 37}, {27, 37}};
    io::write_file(dir / "ring_init_poly.json", io::polygon_to_json(square).dump() + "\n");

    EvolutionParams p = EvolutionParams::coarse_to_fine_defaults();
    const Trajectory t = evolve(init, compute_g(ring, ScalarField(n, n, 1), 0.0), p);
    io::write_mask(dir / "ring_expected.pgm", t.final_snapshot().mask);

    BinaryMask sq(n, n);
    for (int y = 12; y < 52; ++y)
        for (int x = 12; x < 52; ++x) sq.set(y, x, true);
    io::write_mask(dir / "square.pgm", sq);

    const BinaryMask gt = disc_mask(n, n, 32, 32, 10);
    ScalarField blurred = gaussian_smooth(mask_to_boundary(gt).to_field(), 1.0);
    const double m = blurred.max_value();
    for (auto& v : blurred.values()) v /= m;
    io::write_mask(dir / "align_gt.pgm", gt);
    io::write_field(dir / "align_prob.fpm", blurred);

    io::write_file(dir / "malformed.fpm", "FPM1\n64 6");
    std::cout << "fixtures written to " << dir << "\n";
    return 0;
}
