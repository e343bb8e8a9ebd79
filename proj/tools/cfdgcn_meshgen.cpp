/**
 * @file cfdgcn_meshgen.cpp
 * @brief Writes the shipped desk-scale meshes (quad O-grids) into a directory.
 */

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cfdgcn/meshgen.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate the shipped airfoil meshes"};
    std::string dir = "data/meshes";
    app.add_option("--out", dir, "output directory");
    CLI11_PARSE(app, argc, argv);

    using cfdgcn::meshgen::AirfoilShape;
    using cfdgcn::meshgen::OGridSpec;
    // RAE2822 stand-in: a thin aft-cambered section with the same 12.1 % thickness
    // and ~1.26 % camber near 76 % chord.
    const AirfoilShape rae{0.0126, 0.757, 0.121};
    const OGridSpec fine{48, 13, 6.0, 1.35};
    const OGridSpec coarse{16, 5, 6.0, 2.4};
    const struct {
        const char* id;
        AirfoilShape shape;
    } bodies[] = {{"naca0012", AirfoilShape::naca4("0012")},
                  {"naca4412", AirfoilShape::naca4("4412")},
                  {"rae2822", rae}};

    std::filesystem::create_directories(dir);
    auto write = [&](const std::string& name, const cfdgcn::Mesh& mesh) {
        const auto path = (std::filesystem::path(dir) / name).string();
        cfdgcn::write_su2_file(path, mesh);
        std::cout << path << ": " << mesh.num_nodes() << " nodes, " << mesh.num_elements() << " elements\n";
    };
    for (const auto& b : bodies) {
        write(std::string(b.id) + "_fine.su2", cfdgcn::meshgen::airfoil_ogrid(b.shape, fine));
        write(std::string(b.id) + "_coarse.su2", cfdgcn::meshgen::airfoil_ogrid(b.shape, coarse));
    }
    write("tiny_fine.su2", cfdgcn::meshgen::airfoil_ogrid(AirfoilShape::naca4("0012"), {10, 3, 4.0, 2.0}));
    write("tiny_coarse.su2", cfdgcn::meshgen::airfoil_ogrid(AirfoilShape::naca4("0012"), {6, 3, 4.0, 2.0}));
    write("box_farfield.su2", cfdgcn::meshgen::farfield_box(4));
    return 0;
}
