#include <stdio.h>

int main(void) {
  int x = 252;
  int y = 105;
  while (x != y) {
    if (x > y) {
      x = x - y;
    } else {
      y = y - x;
    }
  }
  printf("%d\n", x);
  return 0;
}
