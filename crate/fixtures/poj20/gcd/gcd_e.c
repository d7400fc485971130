#include <stdio.h>

int main(void) {
  int a = 252;
  int b = 105;
  int g = 1;
  for (int d = 1; d <= b; d++) {
    if (a % d == 0 && b % d == 0) {
      g = d;
    }
  }
  printf("%d\n", g);
  return 0;
}
