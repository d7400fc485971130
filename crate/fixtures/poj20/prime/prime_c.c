#include <stdio.h>

int main(void) {
  int candidate = 97;
  int divisor = 2;
  int flag = 1;
  while (divisor < candidate) {
    if (candidate % divisor == 0) {
      flag = 0;
    }
    divisor = divisor + 1;
  }
  printf("%d\n", flag);
  return 0;
}
