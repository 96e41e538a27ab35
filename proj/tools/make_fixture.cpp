// Writes a deterministic synthetic regression CSV:
//   y = sin(x1) + 0.5 x2 + (0.1 + 0.3 |x3|) e,  x_j ~ U(-3, 3), e ~ N(0, 1)
// Columns beyond the third are pure noise features.

#include "uqkit/format.hpp"
#include "uqkit/random.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"synthetic fixture generator"};
    int rows = 1000;
    int features = 4;
    std::uint64_t seed = 2024;
    std::string out;
    app.add_option("--rows", rows, "number of rows")->capture_default_str();
    app.add_option("--features", features, "number of feature columns (>= 3)")->capture_default_str();
    app.add_option("--seed", seed, "generator seed")->capture_default_str();
    app.add_option("--out", out, "output path (stdout if omitted)");
    CLI11_PARSE(app, argc, argv);
    if (features < 3 || rows < 1) {
        std::cerr << "need --features >= 3 and --rows >= 1\n";
        return 2;
    }

    uqkit::Rng rng(seed);
    std::string text = "id";
    for (int j = 1; j <= features; ++j) text += ",x" + std::to_string(j);
    text += ",target\n";
    std::vector<double> x(static_cast<std::size_t>(features));
    for (int i = 0; i < rows; ++i) {
        for (auto& v : x) v = rng.uniform(-3.0, 3.0);
        const double y = std::sin(x[0]) + 0.5 * x[1] + (0.1 + 0.3 * std::abs(x[2])) * rng.normal();
        text += "s" + std::to_string(i);
        for (double v : x) text += "," + uqkit::format_double(v);
        text += "," + uqkit::format_double(y) + "\n";
    }

    if (out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out, std::ios::binary);
        if (!f) {
            std::cerr << "cannot write " << out << "\n";
            return 2;
        }
        f << text;
    }
    return 0;
}
