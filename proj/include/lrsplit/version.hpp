#pragma once

#define LRSPLIT_VERSION "0.1.0"
