#include <iostream>

#include "commands.hpp"
#include "stereo/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Monocular-to-stereo video conversion"};
  app.require_subcommand(1);
  stereoconv::Action action;
  stereoconv::add_convert(app, action);
  stereoconv::add_rectify(app, action);
  stereoconv::add_metrics(app, action);
  stereoconv::add_attn_check(app, action);
  stereoconv::add_synth_scene(app, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    action();
    return 0;
  } catch (const stereo::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.input_fault() ? 2 : 1;
  } catch (const stereo::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const stereo::EstimationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
