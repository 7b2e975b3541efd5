#pragma once

#include <string>
#include <vector>

#include "fieldseg/nn.hpp"
#include "fieldseg/trainer.hpp"

namespace fieldseg::cli {

/// Runs the CLI with the given arguments (excluding argv[0]); returns the
/// process exit code. Errors are printed to stderr as categorized lines.
int run(const std::vector<std::string>& args);

/// The reduced configuration used by the fit-toy subcommand and the
/// regression experiments.
nn::UNet3DConfig toy_model_config();

/// Deterministic toy training set: chips of synthetic scenes (standardized
/// optical stream, multitask ground truth), half of them cloud-free and
/// half with moving clouds.
std::vector<nn::ToySample> toy_dataset(std::uint64_t seed, int n_scenes = 4, int times = 4,
                                       std::size_t size = 64);

} // namespace fieldseg::cli
