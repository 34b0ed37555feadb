#include <string>
#include <vector>

#include "eendvc/cli.h"

int main(int argc, char** argv) {
  return eendvc::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
