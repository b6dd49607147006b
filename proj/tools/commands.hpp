#pragma once

#include <functional>

#include <CLI11.hpp>

namespace stereoconv {

// Each add_* registers a subcommand; when it is selected on the command line
// its body is stored in `action` and run after parsing.
using Action = std::function<void()>;

void add_convert(CLI::App& app, Action& action);
void add_rectify(CLI::App& app, Action& action);
void add_metrics(CLI::App& app, Action& action);
void add_attn_check(CLI::App& app, Action& action);
void add_synth_scene(CLI::App& app, Action& action);

}  // namespace stereoconv
